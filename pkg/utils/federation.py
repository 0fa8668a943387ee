"""Simulated federation: centre partitions and FedAvg over local trainers."""

import json
import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from models.optimizers import OPTIMIZERS, make_optimizer
from utils.errors import ConfigError, DataError, TrainingDivergedError
from utils.training import DEFAULT_BATCH_SIZE, train_local

logger = logging.getLogger(__name__)

WEIGHT_TOLERANCE = 1e-12
PARTITIONS = ('iid', 'stratified')
TOTAL_LOCAL_ROUNDS = 100

# Global / local round splits keeping T * B at 100
ROUND_PRESETS = OrderedDict([
    ('100/1', (100, 1)),
    ('20/5', (20, 5)),
    ('1/100', (1, 100)),
])


@dataclass(frozen=True)
class FederationConfig:
    num_centres: int
    global_rounds: int
    local_rounds: int
    learning_rate: float
    partition: str = 'iid'
    batch_size: int = DEFAULT_BATCH_SIZE
    optimizer: str = 'adam'
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.num_centres < 1 or self.global_rounds < 1 or self.local_rounds < 1:
            raise ConfigError("centres, global rounds and local rounds must be at least 1",
                              centres=self.num_centres, global_rounds=self.global_rounds,
                              local_rounds=self.local_rounds)
        if self.partition not in PARTITIONS:
            raise ConfigError("unknown partition", partition=self.partition)
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError("unknown optimizer", optimizer=self.optimizer)
        if self.batch_size < 1:
            raise ConfigError("batch size must be positive", batch_size=self.batch_size)

    @classmethod
    def from_preset(cls, preset, **kwargs):
        if preset not in ROUND_PRESETS:
            raise ConfigError("unknown round preset", preset=preset, choices=list(ROUND_PRESETS))
        global_rounds, local_rounds = ROUND_PRESETS[preset]
        return cls(global_rounds=global_rounds, local_rounds=local_rounds, **kwargs)


@dataclass(frozen=True)
class CentreData:
    centre_id: int
    indices: np.ndarray

    def __len__(self):
        return len(self.indices)


def _check_centres(n, num_centres):
    if num_centres < 1 or num_centres > n:
        raise DataError("number of centres exceeds the training rows",
                        centres=num_centres, rows=n)


def partition_iid(train_indices, num_centres, seed):
    """Seeded shuffle split into contiguous blocks whose sizes differ by at most one"""
    train_indices = np.asarray(train_indices, dtype=np.int64)
    _check_centres(len(train_indices), num_centres)
    shuffled = np.random.default_rng(seed).permutation(train_indices)
    blocks = np.array_split(shuffled, num_centres)
    return [CentreData(k, np.sort(block)) for k, block in enumerate(blocks)]


def partition_stratified(dataset, train_indices, num_centres):
    """Sort by observed time (ties by index) and cut into contiguous quantile blocks"""
    train_indices = np.asarray(train_indices, dtype=np.int64)
    _check_centres(len(train_indices), num_centres)
    order = np.lexsort((train_indices, dataset.times[train_indices]))
    blocks = np.array_split(train_indices[order], num_centres)
    return [CentreData(k, np.sort(block)) for k, block in enumerate(blocks)]


def partition_centres(dataset, train_indices, cfg):
    """Split the training rows into cfg.num_centres centres the way cfg.partition names"""
    if cfg.partition == 'iid':
        return partition_iid(train_indices, cfg.num_centres, cfg.seed)
    return partition_stratified(dataset, train_indices, cfg.num_centres)


def centre_weights(centres):
    """|N_k| / |N| for each centre"""
    sizes = np.array([len(centre) for centre in centres], dtype=float)
    return sizes / sizes.sum()


def partition_summary(dataset, centres):
    """Per-centre size, event count and observed time range"""
    summary = []
    for centre in centres:
        times = dataset.times[centre.indices]
        summary.append({
            'centre': centre.centre_id,
            'size': len(centre),
            'events': int(dataset.events[centre.indices].sum()),
            'time_min': float(times.min()),
            'time_max': float(times.max())
        })
    return summary


def aggregate(parameter_sets, weights):
    """Element-wise weighted average of named parameter sets"""
    if not parameter_sets:
        raise ConfigError("nothing to aggregate")
    weights = np.asarray(weights, dtype=float)
    if len(weights) != len(parameter_sets):
        raise ConfigError("one weight per parameter set is required")
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > WEIGHT_TOLERANCE:
        raise ConfigError("aggregation weights must be non-negative and sum to 1",
                          weight_sum=float(weights.sum()))

    names = list(parameter_sets[0])
    aggregated = OrderedDict()
    for name in names:
        shape = np.shape(parameter_sets[0][name])
        total = np.zeros(shape)
        for params, weight in zip(parameter_sets, weights):
            if list(params) != names or np.shape(params[name]) != shape:
                raise ConfigError("parameter sets differ in names or shapes", parameter=name)
            total = total + weight * params[name]
        aggregated[name] = total
    return aggregated


def federated_objective(model, X, labels, centres):
    """Sum over centres of w_k times the local mean loss"""
    weights = centre_weights(centres)
    return float(sum(weight * model.nll_loss(X[centre.indices], labels.subset(centre.indices))
                     for weight, centre in zip(weights, centres)))


class RoundLog:
    """Collects one record per global round and optionally appends it as JSON lines"""

    def __init__(self, path=None, fold=None):
        self.path = path
        self.fold = fold
        self.records = []

    def write(self, round_index, centre_losses, global_loss):
        record = {
            'fold': self.fold,
            'round': round_index,
            'centre_losses': {str(k): loss for k, loss in centre_losses.items()},
            'global_loss': global_loss
        }
        self.records.append(record)
        if self.path:
            with open(self.path, 'a', encoding='utf-8') as handle:
                handle.write(json.dumps(record, sort_keys=True) + "\n")


class _LocalTrainer:
    """State owned by one centre: its data, a working model copy and its optimizer"""

    def __init__(self, centre, model, X, labels, cfg):
        self.centre = centre
        self.model = model.copy()
        self.X = X[centre.indices]
        self.labels = labels.subset(centre.indices)
        self.cfg = cfg
        # Adam moments live here across rounds and are never aggregated
        self.optimizer = make_optimizer(cfg.optimizer, cfg.learning_rate)

    def run(self, global_params, round_index):
        self.model.set_parameters(global_params)
        train_local(self.model, self.optimizer, self.X, self.labels,
                    epochs=self.cfg.local_rounds, batch_size=self.cfg.batch_size,
                    seed=self.cfg.seed, centre_id=self.centre.centre_id,
                    first_epoch=round_index * self.cfg.local_rounds,
                    round_index=round_index)
        return self.model.get_parameters(), self.model.nll_loss(self.X, self.labels)


def fed_avg(model0, centres, cfg, X, labels, round_log: Optional[RoundLog] = None):
    """Broadcast, train B local epochs per centre, aggregate by |N_k|/|N|; repeat T times"""
    if not centres:
        raise DataError("federation has no centres")
    for centre in centres:
        if len(centre) == 0:
            raise DataError("empty centre", centre=centre.centre_id)

    X = np.asarray(X, dtype=float)
    weights = centre_weights(centres)
    trainers = [_LocalTrainer(centre, model0, X, labels, cfg) for centre in centres]
    model = model0.copy()
    all_indices = np.concatenate([centre.indices for centre in centres])
    pooled_X, pooled_labels = X[all_indices], labels.subset(all_indices)

    for round_index in range(cfg.global_rounds):
        global_params = model.get_parameters()
        if cfg.n_jobs == 1:
            results = [trainer.run(global_params, round_index) for trainer in trainers]
        else:
            results = Parallel(n_jobs=cfg.n_jobs, prefer='threads')(
                delayed(trainer.run)(global_params, round_index) for trainer in trainers)

        model.set_parameters(aggregate([params for params, _ in results], weights))
        if not model.is_finite():
            raise TrainingDivergedError("non-finite parameters after aggregation",
                                        round=round_index)

        centre_losses = {trainer.centre.centre_id: loss
                         for trainer, (_, loss) in zip(trainers, results)}
        global_loss = model.nll_loss(pooled_X, pooled_labels)
        logger.debug("Round %d centre losses: %s", round_index, centre_losses)
        if round_index == cfg.global_rounds - 1 or (round_index + 1) % 10 == 0:
            logger.info("Round %d/%d aggregated training loss %.5f",
                        round_index + 1, cfg.global_rounds, global_loss)
        if round_log is not None:
            round_log.write(round_index, centre_losses, global_loss)

    return model
