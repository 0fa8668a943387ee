import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid

from utils.errors import MetricError
from utils.survival_core import StepFunction, TimeGrid, interpolate_survival_matrix, kaplan_meier

logger = logging.getLogger(__name__)

DEFAULT_BRIER_POINTS = 100
CONCORDANCE_CHUNK = 512


@dataclass(frozen=True)
class PredictionSet:
    """Predicted step survival (n x m) on grid cuts, with observed times and events"""

    survival: np.ndarray
    grid: TimeGrid
    times: np.ndarray
    events: np.ndarray

    def __post_init__(self):
        n = len(self.times)
        if self.survival.shape != (n, self.grid.m) or len(self.events) != n:
            raise MetricError("prediction set arrays are not aligned",
                              survival=self.survival.shape, times=n, events=len(self.events))

    @classmethod
    def from_curves(cls, curves, grid, times, events):
        survival = np.vstack([curve.values for curve in curves])
        return cls(survival, grid, np.asarray(times, dtype=float), np.asarray(events, dtype=bool))

    def survival_at(self, t):
        """Interpolated S(t | x_i) for every patient, shape (n, len(t))"""
        return interpolate_survival_matrix(self.survival, self.grid, t)


@dataclass
class MetricReport:
    c_index: Optional[float]
    integrated_brier: float
    brier_curve: List[Tuple[float, float]] = field(default_factory=list)
    dropped_terms: int = 0

    def rebased(self):
        return {
            'c_index': rebase(self.c_index),
            'integrated_brier': rebase(self.integrated_brier)
        }

    def to_dict(self):
        return {
            'c_index': self.c_index,
            'integrated_brier': self.integrated_brier,
            'brier_curve': [[t, bs] for t, bs in self.brier_curve],
            'dropped_terms': self.dropped_terms,
            'rebased': self.rebased()
        }


def rebase(value):
    """Metric x 100 rounded to one decimal"""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    return round(value * 100.0, 1)


def concordance_td(preds):
    """Time-dependent concordance: strict S(t_i|x_i) < S(t_i|x_j) over comparable pairs

    Returns nan when no pair is comparable.
    """
    times, events = preds.times, preds.events
    anchors = np.flatnonzero(events)
    concordant = 0
    comparable = 0

    for start in range(0, len(anchors), CONCORDANCE_CHUNK):
        rows = anchors[start:start + CONCORDANCE_CHUNK]
        t_i = times[rows]
        # S(t_i | x_j) for every anchor i (rows) and patient j (columns)
        at_anchor = preds.survival_at(t_i).T
        own = at_anchor[np.arange(len(rows)), rows]

        comp = (t_i[:, np.newaxis] < times[np.newaxis, :]) | (
            (t_i[:, np.newaxis] == times[np.newaxis, :]) & ~events[np.newaxis, :])
        comp[np.arange(len(rows)), rows] = False
        conc = comp & (own[:, np.newaxis] < at_anchor)

        comparable += int(comp.sum())
        concordant += int(conc.sum())

    if comparable == 0:
        logger.warning("Concordance undefined: no comparable pairs")
        return float('nan')
    return concordant / comparable


def censoring_curve(times, events):
    """Kaplan-Meier estimate of the censoring distribution G"""
    return kaplan_meier(times, ~np.asarray(events, dtype=bool))


def _brier_terms(preds, t, censor_curve):
    survival = preds.survival_at([t])[:, 0]
    times, events = preds.times, preds.events

    died = (times <= t) & events
    alive = times > t
    g_event = censor_curve.left_limit(times)
    g_now = float(censor_curve(t))

    weights = np.zeros(len(times))
    targets = np.zeros(len(times))
    usable_died = died & (g_event > 0)
    weights[usable_died] = 1.0 / g_event[usable_died]
    if g_now > 0:
        weights[alive] = 1.0 / g_now
        targets[alive] = 1.0
    dropped = int((died & (g_event <= 0)).sum() + (alive.sum() if g_now <= 0 else 0))
    return weights * (targets - survival) ** 2, dropped


def brier_score(preds, t, censor_curve):
    """Graf's censoring-weighted Brier score at time t"""
    terms, dropped = _brier_terms(preds, t, censor_curve)
    if dropped:
        logger.warning("Dropped %d Brier terms at t=%g where G is zero", dropped, t)
    return float(terms.sum() / len(terms))


def brier_curve(preds, censor_curve, num_points=DEFAULT_BRIER_POINTS):
    """BS(t) at num_points equally spaced times over the observed range"""
    if num_points < 2:
        raise MetricError("at least two integration points are required", num_points=num_points)
    t_min, t_max = float(preds.times.min()), float(preds.times.max())
    if t_max <= t_min:
        raise MetricError("degenerate time range: all observed times are equal", time=t_min)

    grid = np.linspace(t_min, t_max, num_points)
    scores = np.empty(num_points)
    dropped = 0
    for k, t in enumerate(grid):
        terms, lost = _brier_terms(preds, t, censor_curve)
        scores[k] = terms.sum() / len(terms)
        dropped += lost
    if dropped:
        logger.warning("Dropped %d Brier terms across the curve where G is zero", dropped)
    return grid, scores, dropped


def integrated_brier(preds, censor_curve, num_points=DEFAULT_BRIER_POINTS):
    """Trapezoidal integral of BS(t) over [min time, max time], divided by its length"""
    grid, scores, _ = brier_curve(preds, censor_curve, num_points)
    return float(trapezoid(scores, grid) / (grid[-1] - grid[0]))


def evaluate(preds, num_points=DEFAULT_BRIER_POINTS, censor_curve: Optional[StepFunction] = None):
    """Concordance and integrated Brier score on one evaluation set"""
    if censor_curve is None:
        censor_curve = censoring_curve(preds.times, preds.events)
    c_index = concordance_td(preds)
    grid, scores, dropped = brier_curve(preds, censor_curve, num_points)
    ibs = float(trapezoid(scores, grid) / (grid[-1] - grid[0]))
    return MetricReport(
        c_index=None if math.isnan(c_index) else c_index,
        integrated_brier=ibs,
        brier_curve=[(float(t), float(bs)) for t, bs in zip(grid, scores)],
        dropped_terms=dropped
    )
