import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from utils.errors import DataError

logger = logging.getLogger(__name__)

# Tolerance when comparing KM values against quantile targets
TARGET_TOLERANCE = 1e-12


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous step function; value_before_first applies left of times[0]"""

    times: np.ndarray
    values: np.ndarray
    value_before_first: float = 1.0

    def __post_init__(self):
        if len(self.times) != len(self.values):
            raise ValueError("times and values must have the same length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("step times must be strictly increasing")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        position = np.searchsorted(self.times, t, side='right')
        padded = np.concatenate(([self.value_before_first], self.values))
        return padded[position]

    def left_limit(self, t):
        """Value just before t, i.e. S(t-)"""
        t = np.asarray(t, dtype=float)
        position = np.searchsorted(self.times, t, side='left')
        padded = np.concatenate(([self.value_before_first], self.values))
        return padded[position]

    def to_dict(self):
        return {'times': self.times.tolist(), 'values': self.values.tolist()}


@dataclass(frozen=True)
class TimeGrid:
    """Cut points tau_1..tau_m; interval j is [tau_j, tau_{j+1}) with tau_0 = 0"""

    cuts: np.ndarray
    requested_intervals: int = 0

    def __post_init__(self):
        if len(self.cuts) < 1:
            raise ValueError("a time grid needs at least one cut")
        if np.any(np.diff(self.cuts) <= 0):
            raise ValueError("grid cuts must be strictly increasing")

    @property
    def m(self):
        return len(self.cuts)

    @property
    def knots(self):
        """Cuts with tau_0 = 0 prepended"""
        return np.concatenate(([0.0], self.cuts))

    def to_dict(self):
        return {'cuts': self.cuts.tolist(), 'm': self.m,
                'requested_intervals': self.requested_intervals or self.m}


class DiscreteLabel(NamedTuple):
    interval: int
    event: bool


@dataclass(frozen=True)
class DiscreteLabels:
    """Column-wise labels: intervals (n,) and events (n,)"""

    intervals: np.ndarray
    events: np.ndarray

    def __len__(self):
        return len(self.intervals)

    def __getitem__(self, i):
        return DiscreteLabel(int(self.intervals[i]), bool(self.events[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return DiscreteLabels(self.intervals[indices], self.events[indices])


def kaplan_meier(times, events):
    """Product-limit estimate; at tied times events are removed before censorings"""

    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    if len(times) == 0:
        raise DataError("Kaplan-Meier needs at least one observation")
    if len(times) != len(events):
        raise DataError("times and events must have the same length")
    if np.any(times < 0):
        raise DataError("negative time")

    event_times = np.unique(times[events])
    if len(event_times) == 0:
        return StepFunction(np.empty(0), np.empty(0))

    sorted_times = np.sort(times)
    at_risk = len(times) - np.searchsorted(sorted_times, event_times, side='left')
    sorted_event_times = np.sort(times[events])
    deaths = (np.searchsorted(sorted_event_times, event_times, side='right')
              - np.searchsorted(sorted_event_times, event_times, side='left'))

    survival = np.cumprod(1.0 - deaths / at_risk)
    return StepFunction(event_times, survival)


def km_quantile_grid(times, events, m):
    """Cuts where KM survival first reaches equal drops of (1 - S(tau_max)) / m"""

    if m < 1:
        raise DataError("number of intervals must be at least 1", m=m)
    times = np.asarray(times, dtype=float)
    curve = kaplan_meier(times, events)
    if len(curve.times) == 0:
        raise DataError("cannot discretize without events: Kaplan-Meier never drops")

    t_max = float(times.max())
    s_max = float(curve(t_max))
    targets = 1.0 - np.arange(1, m + 1) * (1.0 - s_max) / m

    cuts = []
    for target in targets[:-1]:
        crossing = np.flatnonzero(curve.values <= target + TARGET_TOLERANCE)
        cuts.append(float(curve.times[crossing[0]]))
    cuts.append(t_max)

    cuts = np.unique(np.asarray(cuts))
    cuts = cuts[cuts > 0]
    if len(cuts) == 0:
        raise DataError("all observed times are zero")
    if len(cuts) < m:
        logger.warning("Collapsed duplicate grid cuts: requested %d intervals, using %d",
                       m, len(cuts))
    return TimeGrid(cuts=cuts, requested_intervals=m)


def discretize_labels(dataset, grid):
    """Map times to interval j with t in [tau_j, tau_{j+1}); times beyond tau_m clamp to m-1"""

    times = np.asarray(dataset.times, dtype=float)
    if np.any(times < 0):
        position = int(np.flatnonzero(times < 0)[0])
        raise DataError("negative time", row=position)

    intervals = np.searchsorted(grid.cuts, times, side='right')
    intervals = np.minimum(intervals, grid.m - 1).astype(np.int64)
    return DiscreteLabels(intervals, np.asarray(dataset.events, dtype=bool).copy())


def survival_from_hazards(hazards):
    """S_j = prod_{k<=j} (1 - h_k) along the last axis"""
    hazards = np.asarray(hazards, dtype=float)
    return np.cumprod(1.0 - hazards, axis=-1)


def _interpolation_weights(knots, t):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    last = len(knots) - 1
    upper = np.clip(np.searchsorted(knots, t, side='left'), 1, last)
    lower = upper - 1
    fraction = np.clip((t - knots[lower]) / (knots[upper] - knots[lower]), 0.0, 1.0)
    return lower, upper, fraction


def interpolate_survival_matrix(survival, grid, t):
    """Constant-density interpolation of step survival rows at times t

    survival is (n, m) with column j holding S(tau_{j+1}); S(0) = 1. Returns an
    (n, len(t)) matrix. Beyond tau_m the curve is held constant.
    """
    survival = np.atleast_2d(np.asarray(survival, dtype=float))
    values = np.hstack([np.ones((survival.shape[0], 1)), survival])
    lower, upper, fraction = _interpolation_weights(grid.knots, t)
    return values[:, lower] * (1.0 - fraction) + values[:, upper] * fraction


def interpolate_survival(curve, grid, t):
    """Interpolated S(t) for one step curve defined on the grid cuts"""
    if t < 0:
        raise ValueError("interpolation time must be non-negative")
    return float(interpolate_survival_matrix(curve.values[np.newaxis, :], grid, [t])[0, 0])
