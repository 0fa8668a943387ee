"""Cross-validated pooled and federated experiments, learning-rate search and sweeps."""

import json
import logging
import math
import os
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from models.survival_model import ModelConfig, init_model
from utils.config import LR_GRID
from utils.data_loader import (apply_standardization, kfold, load_csv, split_fold, standardize,
                               train_test_split)
from utils.errors import ConfigError, DataError, FedSurvError, TrainingDivergedError
from utils.federation import (FederationConfig, RoundLog, fed_avg, partition_centres,
                              partition_summary)
from utils.fingerprint import fingerprint_array
from utils.metrics import PredictionSet, evaluate
from utils.survival_core import discretize_labels, km_quantile_grid
from utils.training import train_pooled

logger = logging.getLogger(__name__)

VALIDATION_FRACTION = 0.2
SWEEP_COLUMNS = ['time_steps', 'mode', 'model', 'rounds', 'c_index_mean', 'c_index_std',
                 'ibs_mean', 'ibs_std', 'effective_steps']


@dataclass
class FoldResult:
    fold: int
    metrics: dict
    learning_rate: float
    grid: dict
    train_size: int
    test_size: int
    fit_inputs: Dict[str, dict]
    test_fingerprint: str
    centres: List[dict] = field(default_factory=list)
    lr_search: Dict[str, Optional[float]] = field(default_factory=dict)

    def to_dict(self):
        return {
            'fold': self.fold,
            'metrics': self.metrics,
            'learning_rate': self.learning_rate,
            'grid': self.grid,
            'train_size': self.train_size,
            'test_size': self.test_size,
            'fit_inputs': self.fit_inputs,
            'test_fingerprint': self.test_fingerprint,
            'centres': self.centres,
            'lr_search': self.lr_search
        }


@dataclass
class ExperimentReport:
    config: dict
    dataset: dict
    folds: List[FoldResult]
    summary: dict
    wall_clock_seconds: float = 0.0

    def to_dict(self):
        return {
            'config': self.config,
            'dataset': self.dataset,
            'folds': [fold.to_dict() for fold in self.folds],
            'summary': self.summary,
            'wall_clock_seconds': self.wall_clock_seconds
        }

    def to_json(self, include_wall_clock=True):
        payload = self.to_dict()
        if not include_wall_clock:
            payload.pop('wall_clock_seconds')
        return json.dumps(payload, indent=2, sort_keys=True)

    def save(self, path):
        with open(path, 'w', encoding='utf-8') as handle:
            handle.write(self.to_json())
            handle.write("\n")


def _mean_std(values):
    """Population mean and standard deviation over folds, ignoring undefined entries"""
    values = [v for v in values if v is not None and not math.isnan(v)]
    if not values:
        return None, None
    return float(np.mean(values)), float(np.std(values))


def summarise(folds):
    c_mean, c_std = _mean_std([fold.metrics['c_index'] for fold in folds])
    ibs_mean, ibs_std = _mean_std([fold.metrics['integrated_brier'] for fold in folds])

    def rebased(value):
        return None if value is None else round(value * 100.0, 1)

    return {
        'c_index_mean': c_mean,
        'c_index_std': c_std,
        'ibs_mean': ibs_mean,
        'ibs_std': ibs_std,
        'rebased': {
            'c_index_mean': rebased(c_mean),
            'c_index_std': rebased(c_std),
            'ibs_mean': rebased(ibs_mean),
            'ibs_std': rebased(ibs_std)
        },
        'learning_rates': [fold.learning_rate for fold in folds],
        'effective_steps': [fold.grid['m'] for fold in folds]
    }


def _model_config(cfg, input_dim, num_intervals):
    return ModelConfig.from_name(cfg.model, num_intervals=num_intervals, input_dim=input_dim,
                                 seed=cfg.seed, hidden_sizes=cfg.hidden_sizes)


def fit_model(cfg, train, labels, grid, learning_rate, round_log=None):
    """Train one model on (standardized) training data, pooled or federated"""
    model0 = init_model(_model_config(cfg, train.num_features, grid.m))
    if not cfg.federated:
        return model0, train_pooled(model0, train.features, labels, epochs=cfg.total_rounds,
                                    learning_rate=learning_rate, batch_size=cfg.batch_size,
                                    optimizer=cfg.optimizer, seed=cfg.seed), []

    fed_cfg = FederationConfig(num_centres=cfg.centres, global_rounds=cfg.global_rounds,
                               local_rounds=cfg.local_rounds, learning_rate=learning_rate,
                               partition=cfg.mode, batch_size=cfg.batch_size,
                               optimizer=cfg.optimizer, seed=cfg.seed, n_jobs=cfg.n_jobs)
    centres = partition_centres(train, np.arange(len(train)), fed_cfg)
    summary = partition_summary(train, centres)
    for entry in summary:
        logger.info("Centre %(centre)d: %(size)d rows, %(events)d events, "
                    "times %(time_min).1f-%(time_max).1f", entry)

    model = fed_avg(model0, centres, fed_cfg, train.features, labels, round_log=round_log)
    return model0, model, summary


def grid_search_lr(train, labels, grid, cfg, lr_grid=LR_GRID):
    """Pick the learning rate with the lowest validation loss on a 20% slice of training data

    Candidates are trained pooled on the remaining 80%. Non-finite candidates are
    excluded; ties go to the smaller learning rate.
    """
    fit_idx, val_idx = train_test_split(train, VALIDATION_FRACTION, cfg.seed)
    if len(fit_idx) == 0 or len(val_idx) == 0:
        raise ConfigError("training split too small for a validation slice", rows=len(train))

    fit_X, val_X = train.features[fit_idx], train.features[val_idx]
    fit_labels, val_labels = labels.subset(fit_idx), labels.subset(val_idx)
    model0 = init_model(_model_config(cfg, train.num_features, grid.m))

    losses = {}
    for lr in sorted(lr_grid):
        try:
            model = train_pooled(model0, fit_X, fit_labels, epochs=cfg.total_rounds,
                                 learning_rate=lr, batch_size=cfg.batch_size,
                                 optimizer=cfg.optimizer, seed=cfg.seed)
            loss = model.nll_loss(val_X, val_labels)
        except TrainingDivergedError as exc:
            logger.warning("Learning rate %g diverged: %s", lr, exc)
            loss = float('nan')
        losses[lr] = loss if np.isfinite(loss) else None
        logger.debug("Learning rate %g: validation loss %s", lr, losses[lr])

    finite = [(loss, lr) for lr, loss in losses.items() if loss is not None]
    if not finite:
        raise TrainingDivergedError("all learning-rate grid points diverged",
                                    grid=[float(lr) for lr in sorted(lr_grid)])
    best_loss = min(loss for loss, _ in finite)
    chosen = min(lr for loss, lr in finite if loss == best_loss)
    logger.info("Chose learning rate %g (validation loss %.5f)", chosen, best_loss)
    return chosen, {repr(lr): loss for lr, loss in losses.items()}


class FitProvenance:
    """Rows that reached each fit step of one fold; any held-out row is refused"""

    def __init__(self, held_out, fold):
        self.held_out_ids = np.asarray(held_out.row_ids)
        self.fold = fold
        self.steps = {}

    def record(self, step, data):
        leaked = np.intersect1d(data.row_ids, self.held_out_ids)
        if len(leaked):
            raise DataError("held-out rows reached a fit step", step=step, fold=self.fold,
                            rows=[int(i) for i in leaked[:10]])
        self.steps[step] = {'rows': len(data), 'fingerprint': fingerprint_array(data.row_ids)}
        return data


def run_fold(cfg, dataset, split, round_log_path=None, model_dir=None):
    """Fit grid, standardization and learning rate on the training fold; evaluate held-out"""
    train_raw, test_raw = split_fold(dataset, split)
    provenance = FitProvenance(test_raw, split.fold)

    train, stats = standardize(provenance.record('standardize', train_raw))
    test = apply_standardization(test_raw, stats)
    grid_rows = provenance.record('time_grid', train)
    grid = km_quantile_grid(grid_rows.times, grid_rows.events, cfg.time_steps)
    labels = discretize_labels(train, grid)
    logger.info("Fold %d: %d train / %d test rows, %d intervals",
                split.fold, len(train), len(test), grid.m)

    lr_search = {}
    if cfg.lr_grid:
        learning_rate, lr_search = grid_search_lr(provenance.record('lr_search', train),
                                                  labels, grid, cfg)
    else:
        learning_rate = cfg.lr

    round_log = RoundLog(round_log_path, fold=split.fold) if cfg.federated else None
    _, model, centres = fit_model(cfg, provenance.record('training', train), labels, grid,
                                  learning_rate, round_log=round_log)
    if model_dir:
        model.save(os.path.join(model_dir, f"fold_{split.fold}.model.json"))

    preds = PredictionSet(model.predict_survival_matrix(test.features), grid,
                          test.times, test.events)
    metrics = evaluate(preds, num_points=cfg.brier_points)
    logger.info("Fold %d: c-index %s, integrated Brier %.4f",
                split.fold, metrics.c_index, metrics.integrated_brier)

    return FoldResult(
        fold=split.fold,
        metrics=metrics.to_dict(),
        learning_rate=learning_rate,
        grid=grid.to_dict(),
        train_size=len(train),
        test_size=len(test),
        fit_inputs=provenance.steps,
        test_fingerprint=fingerprint_array(test_raw.row_ids),
        centres=centres,
        lr_search=lr_search
    )


def _run_fold_with_context(cfg, dataset, split, round_log_path, model_dir):
    try:
        return run_fold(cfg, dataset, split, round_log_path, model_dir)
    except FedSurvError as exc:
        raise exc.with_context(fold=split.fold)


def _round_log_path(out):
    if not out:
        return None
    stem, _ = os.path.splitext(out)
    return f"{stem}.rounds.jsonl"


def run_experiment(cfg, dataset=None, write=True):
    """k-fold cross-validated training and evaluation; writes the JSON report when asked"""
    started = time.perf_counter()
    if dataset is None:
        if not cfg.dataset:
            raise ConfigError("no dataset given (--dataset)")
        dataset = load_csv(cfg.dataset, cfg.time_col, cfg.event_col)

    splits = kfold(dataset, cfg.folds, cfg.seed)
    round_log_path = _round_log_path(cfg.out) if write and cfg.federated else None
    if round_log_path and os.path.exists(round_log_path):
        os.remove(round_log_path)
    model_dir = None
    if write and cfg.save_models:
        model_dir = os.path.splitext(cfg.out)[0] + "_models"
        os.makedirs(model_dir, exist_ok=True)

    if cfg.n_jobs == 1 or cfg.federated:
        folds = [_run_fold_with_context(cfg, dataset, split, round_log_path, model_dir)
                 for split in splits]
    else:
        folds = Parallel(n_jobs=cfg.n_jobs)(
            delayed(_run_fold_with_context)(cfg, dataset, split, None, model_dir)
            for split in splits)

    report = ExperimentReport(config=cfg.to_dict(), dataset=dataset.summary(),
                              folds=folds, summary=summarise(folds),
                              wall_clock_seconds=time.perf_counter() - started)
    rebased = report.summary['rebased']
    logger.info("%s / %s: c-index %s +- %s, integrated Brier %s +- %s", cfg.model, cfg.mode,
                rebased['c_index_mean'], rebased['c_index_std'],
                rebased['ibs_mean'], rebased['ibs_std'])
    if write and cfg.out:
        report.save(cfg.out)
        logger.info("Wrote report to %s", cfg.out)
    return report


def sweep_fineness(cfg, m_values, models=None, modes=None, dataset=None, table_path=None):
    """One experiment per (time steps, model, mode) with 100 global / 1 local rounds"""
    if not m_values or any(m < 1 for m in m_values):
        raise ConfigError("time-step values must be at least 1", time_steps=list(m_values))
    models = list(models or [cfg.model])
    modes = list(modes or [cfg.mode])
    if dataset is None:
        if not cfg.dataset:
            raise ConfigError("no dataset given (--dataset)")
        dataset = load_csv(cfg.dataset, cfg.time_col, cfg.event_col)

    stem, _ = os.path.splitext(cfg.out or 'sweep.json')
    reports, rows = [], []
    for m in m_values:
        for model in models:
            for mode in modes:
                run_cfg = replace(cfg, time_steps=m, model=model, mode=mode,
                                  global_rounds=100, local_rounds=1,
                                  out=f"{stem}_m{m}_{model}_{mode}.json" if cfg.out else None)
                report = run_experiment(run_cfg, dataset=dataset, write=bool(cfg.out))
                reports.append(report)
                summary = report.summary
                rows.append({
                    'time_steps': m,
                    'mode': mode,
                    'model': model,
                    'rounds': '100/1',
                    'c_index_mean': summary['c_index_mean'],
                    'c_index_std': summary['c_index_std'],
                    'ibs_mean': summary['ibs_mean'],
                    'ibs_std': summary['ibs_std'],
                    'effective_steps': float(np.mean(summary['effective_steps']))
                })

    table = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    if table_path:
        table.to_csv(table_path, index=False)
        logger.info("Wrote sweep table to %s", table_path)
    return reports, table
