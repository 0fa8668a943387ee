import json
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Tuple

from models.optimizers import OPTIMIZERS
from utils.errors import ConfigError
from utils.federation import ROUND_PRESETS

MODELS = ('linear-ph', 'nn-ph', 'nn-nonph')
MODES = ('pooled', 'iid', 'stratified')
LR_GRID = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: Optional[str] = None
    time_col: str = 'time'
    event_col: str = 'event'
    model: str = 'nn-nonph'
    mode: str = 'pooled'
    centres: int = 4
    global_rounds: int = 100
    local_rounds: int = 1
    time_steps: int = 10
    folds: int = 5
    lr: Optional[float] = None
    lr_grid: bool = False
    batch_size: int = 256
    seed: int = 0
    optimizer: str = 'adam'
    hidden_sizes: Tuple[int, ...] = field(default=(32, 32))
    brier_points: int = 100
    n_jobs: int = 1
    save_models: bool = False
    out: str = 'report.json'

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError("unknown model", model=self.model, choices=list(MODELS))
        if self.mode not in MODES:
            raise ConfigError("unknown data mode", mode=self.mode, choices=list(MODES))
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError("unknown optimizer", optimizer=self.optimizer)
        for name in ('centres', 'global_rounds', 'local_rounds', 'time_steps',
                     'batch_size', 'brier_points'):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1", **{name: getattr(self, name)})
        if self.folds < 2:
            raise ConfigError("at least two folds are required", folds=self.folds)
        if self.lr is not None and not self.lr > 0:
            raise ConfigError("learning rate must be positive", lr=self.lr)
        if self.lr is None and not self.lr_grid:
            raise ConfigError("give a learning rate (--lr) or request the grid (--lr-grid)")

    @property
    def total_rounds(self):
        return self.global_rounds * self.local_rounds

    @property
    def federated(self):
        return self.mode != 'pooled'

    def to_dict(self):
        data = asdict(self)
        data['hidden_sizes'] = list(self.hidden_sizes)
        return data


def _field_types():
    return {f.name: f.type for f in fields(ExperimentConfig)}


def _normalise_key(key):
    return key.strip().lstrip('-').replace('-', '_')


def _coerce(name, value):
    """Parse a raw string or JSON value into the field's type"""
    if name == 'rounds':
        if value not in ROUND_PRESETS:
            raise ConfigError("unknown round preset", rounds=value, choices=list(ROUND_PRESETS))
        return value
    kind = _field_types()[name]
    try:
        if name == 'hidden_sizes':
            if isinstance(value, str):
                value = [part for part in value.split(',') if part.strip()]
            return tuple(int(part) for part in value)
        if name == 'lr':
            return None if value in (None, '', 'none', 'None') else float(value)
        if kind is bool or kind == 'bool':
            if isinstance(value, bool):
                return value
            lowered = str(value).strip().lower()
            if lowered in ('1', 'true', 'yes', 'on'):
                return True
            if lowered in ('0', 'false', 'no', 'off'):
                return False
            raise ValueError(value)
        if kind is int or kind == 'int':
            return int(value)
        if name == 'dataset':
            return None if value in (None, '') else str(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError("invalid configuration value", key=name, value=value)


def parse_config_text(text):
    """Flat key-value text: a JSON object, or 'key = value' lines with # comments"""
    stripped = text.strip()
    if stripped.startswith('{'):
        try:
            raw = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ConfigError("invalid JSON config", detail=str(exc))
        if any(isinstance(v, dict) for v in raw.values()):
            raise ConfigError("config must be flat key-value")
        return {_normalise_key(k): v for k, v in raw.items()}

    values = {}
    for line_number, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError("expected 'key = value'", line=line_number)
        key, value = line.split('=', 1)
        values[_normalise_key(key)] = value.strip()
    return values


def build_config(file_values=None, overrides=None):
    """Merge config-file values with flag overrides (flags win) into an ExperimentConfig"""
    merged = {}
    known = set(_field_types()) | {'rounds'}
    for source in (file_values or {}, overrides or {}):
        values = {}
        for key, value in source.items():
            name = _normalise_key(key)
            if name not in known:
                raise ConfigError("unknown configuration key", key=key)
            if value is None:
                continue
            values[name] = _coerce(name, value)

        # a preset expands first so explicit round counts from the same source win
        preset = values.pop('rounds', None)
        if preset is not None:
            merged['global_rounds'], merged['local_rounds'] = ROUND_PRESETS[preset]
        merged.update(values)
    return ExperimentConfig(**merged)


def load_config(path, overrides=None):
    if path is None:
        return build_config({}, overrides)
    if not os.path.exists(path):
        raise ConfigError("config file not found", path=path)
    with open(path, 'r', encoding='utf-8') as handle:
        return build_config(parse_config_text(handle.read()), overrides)
