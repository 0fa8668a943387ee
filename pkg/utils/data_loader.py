import logging
import math
import os
from dataclasses import dataclass, field, replace
from typing import List, NamedTuple, Optional

import numpy as np
import pandas as pd
from sklearn.model_selection import KFold
from sklearn.preprocessing import StandardScaler

from utils.errors import DataError

logger = logging.getLogger(__name__)


class SurvivalRecord(NamedTuple):
    features: np.ndarray
    time: float
    event: bool


@dataclass(frozen=True)
class Standardization:
    """Per-feature (mean, stddev) pairs fitted on training rows"""

    mean: np.ndarray
    scale: np.ndarray

    def apply(self, features):
        return (np.asarray(features, dtype=float) - self.mean) / self.scale

    def invert(self, features):
        return np.asarray(features, dtype=float) * self.scale + self.mean

    def to_dict(self):
        return {'mean': self.mean.tolist(), 'scale': self.scale.tolist()}


@dataclass(frozen=True)
class Dataset:
    """Survival data held column-wise: features (n x p), times (n,), events (n,)"""

    features: np.ndarray
    times: np.ndarray
    events: np.ndarray
    feature_names: List[str]
    standardization: Optional[Standardization] = None
    row_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        n, p = self.features.shape
        if self.row_ids is None:
            object.__setattr__(self, "row_ids", np.arange(n, dtype=np.int64))
        elif len(self.row_ids) != n:
            raise DataError("row ids must match the number of rows", rows=n, ids=len(self.row_ids))
        if len(self.times) != n or len(self.events) != n:
            raise DataError("features, times and events must have the same length")
        if p != len(self.feature_names):
            raise DataError("feature length does not match feature names",
                            features=p, names=len(self.feature_names))

    def __len__(self):
        return len(self.times)

    @property
    def num_features(self):
        return self.features.shape[1]

    @property
    def records(self):
        return [SurvivalRecord(x, float(t), bool(s))
                for x, t, s in zip(self.features, self.times, self.events)]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return replace(self, features=self.features[indices],
                       times=self.times[indices], events=self.events[indices],
                       row_ids=self.row_ids[indices])

    def summary(self):
        """Size, feature count, proportion censored and last event time"""
        event_times = self.times[self.events]
        return {
            'size': len(self),
            'features': self.num_features,
            'prop_censored': float(1.0 - self.events.mean()) if len(self) else 0.0,
            'last_event': float(event_times.max()) if len(event_times) else None
        }


@dataclass(frozen=True)
class FoldSplit:
    train_indices: np.ndarray
    test_indices: np.ndarray
    fold: int = field(default=0)


def _data_row(position):
    # 1-based file line, header is line 1
    return int(position) + 2


def load_csv(path, time_column, event_column):
    """Load a comma-delimited survival dataset; every other column is a numeric feature"""

    if not os.path.exists(path):
        raise DataError("missing file", path=str(path))

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except pd.errors.EmptyDataError:
        raise DataError("empty dataset", path=str(path))

    for column in (time_column, event_column):
        if column not in frame.columns:
            raise DataError("missing column", path=str(path), column=column)

    if frame.empty:
        raise DataError("empty dataset", path=str(path))

    numeric = {}
    for column in frame.columns:
        raw = frame[column].str.strip()
        values = pd.to_numeric(raw, errors='coerce')
        bad = values.isna().to_numpy() | ~np.isfinite(values.to_numpy(dtype=float, na_value=np.nan))
        if bad.any():
            position = int(np.flatnonzero(bad)[0])
            cell = raw.iloc[position]
            reason = "missing value" if cell == "" else "non-numeric cell"
            raise DataError(reason, path=str(path), row=_data_row(position),
                            column=column, value=cell)
        # to_numeric only screens cells; its fast parser can land one ulp off
        numeric[column] = raw.map(float).to_numpy(dtype=float)

    times = numeric[time_column]
    negative = np.flatnonzero(times < 0)
    if len(negative):
        position = int(negative[0])
        raise DataError("negative time", path=str(path), row=_data_row(position),
                        column=time_column, value=float(times[position]))

    raw_events = numeric[event_column]
    invalid = np.flatnonzero((raw_events != 0) & (raw_events != 1))
    if len(invalid):
        position = int(invalid[0])
        raise DataError("event value outside {0,1}", path=str(path), row=_data_row(position),
                        column=event_column, value=float(raw_events[position]))

    feature_names = [c for c in frame.columns if c not in (time_column, event_column)]
    if not feature_names:
        raise DataError("no feature columns", path=str(path))
    features = np.column_stack([numeric[c] for c in feature_names])

    dataset = Dataset(features=features, times=times, events=raw_events == 1,
                      feature_names=feature_names)
    logger.info("Loaded %s: %s", path, dataset.summary())
    return dataset


def standardize(dataset):
    """Fit population-std standardization on this dataset; constant columns map to zero"""

    if dataset.standardization is not None:
        raise DataError("dataset is already standardized")

    scaler = StandardScaler()
    transformed = scaler.fit_transform(dataset.features)
    stats = Standardization(mean=scaler.mean_.copy(), scale=scaler.scale_.copy())
    return replace(dataset, features=transformed, standardization=stats), stats


def apply_standardization(dataset, stats):
    """Apply stats fitted elsewhere (e.g. on the training split) to held-out data"""
    if dataset.standardization is not None:
        raise DataError("dataset is already standardized")
    return replace(dataset, features=stats.apply(dataset.features), standardization=stats)


def train_test_split(dataset, test_fraction, seed):
    """Seeded shuffle; test size is round(test_fraction * n)"""

    n = len(dataset)
    if n == 0:
        raise DataError("empty dataset")
    if not 0.0 < test_fraction < 1.0:
        raise DataError("test fraction must lie in (0, 1)", test_fraction=test_fraction)

    n_test = int(math.floor(test_fraction * n + 0.5))
    permutation = np.random.default_rng(seed).permutation(n)
    return permutation[n_test:], permutation[:n_test]


def kfold(dataset, k, seed):
    """Shuffled k-fold partition; fold sizes differ by at most one"""

    n = len(dataset)
    if k < 2 or k > n:
        raise DataError("number of folds out of range", folds=k, size=n)

    splitter = KFold(n_splits=k, shuffle=True, random_state=seed)
    return [FoldSplit(train_indices=train, test_indices=test, fold=i)
            for i, (train, test) in enumerate(splitter.split(np.zeros((n, 1))))]


def split_fold(dataset, split):
    """Fit rows and held-out rows of one fold, each carrying its source row ids"""
    return dataset.subset(split.train_indices), dataset.subset(split.test_indices)
