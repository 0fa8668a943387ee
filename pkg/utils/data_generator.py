import json
import logging

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from utils.data_loader import Dataset
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

WEIBULL_SHAPE = 1.5
WEIBULL_SCALE = 365.0
TARGET_CENSORING = 0.3
TIME_COLUMN = 'time'
EVENT_COLUMN = 'event'


def _censoring_bound(event_times, rate):
    """Upper bound c of Uniform(0, c) censoring giving the expected censoring rate"""

    def expected_rate(c):
        # P(C < T) for C ~ U(0, c) is E[min(T, c)] / c
        return np.minimum(event_times, c).mean() / c - rate

    low = float(event_times.min()) * 1e-6
    high = float(event_times.max()) * 1e6
    return brentq(expected_rate, low, high)


def generate_synthetic(n, p, seed, coefficients=None, signal=1.0,
                       censoring_rate=TARGET_CENSORING):
    """Weibull proportional-hazards times with independent uniform censoring

    Event times have hazard (k / scale) (t / scale)^(k-1) exp(beta^T x). Returns
    the dataset and a dict of generation parameters.
    """
    if n < 1 or p < 1:
        raise ConfigError("n and p must be at least 1", n=n, p=p)
    if not 0.0 < censoring_rate < 1.0:
        raise ConfigError("censoring rate must lie in (0, 1)", censoring_rate=censoring_rate)

    rng = np.random.default_rng(seed)
    if coefficients is None:
        coefficients = rng.normal(0.0, 1.0, size=p) * signal / np.sqrt(p)
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.shape != (p,):
        raise ConfigError("need one coefficient per feature", p=p, got=coefficients.shape)

    features = rng.normal(0.0, 1.0, size=(n, p))
    uniforms = rng.uniform(size=n)
    linear = features @ coefficients
    event_times = WEIBULL_SCALE * (-np.log(uniforms) * np.exp(-linear)) ** (1.0 / WEIBULL_SHAPE)

    bound = _censoring_bound(event_times, censoring_rate)
    censor_times = rng.uniform(0.0, bound, size=n)
    events = event_times <= censor_times
    times = np.minimum(event_times, censor_times)

    dataset = Dataset(features=features, times=times, events=events,
                      feature_names=[f'x{j}' for j in range(p)])
    params = {
        'n': n,
        'p': p,
        'seed': seed,
        'coefficients': coefficients.tolist(),
        'weibull_shape': WEIBULL_SHAPE,
        'weibull_scale': WEIBULL_SCALE,
        'censoring': 'uniform',
        'censoring_bound': float(bound),
        'target_censoring_rate': censoring_rate,
        'realised_censoring_rate': float(1.0 - events.mean())
    }
    logger.info("Generated synthetic data: n=%d p=%d censored=%.1f%%",
                n, p, 100.0 * params['realised_censoring_rate'])
    return dataset, params


def write_dataset(dataset, path):
    """Write a dataset in the standard CSV layout: features, then time and event"""
    frame = pd.DataFrame(dataset.features, columns=dataset.feature_names)
    frame[TIME_COLUMN] = dataset.times
    frame[EVENT_COLUMN] = dataset.events.astype(int)
    frame.to_csv(path, index=False, encoding='utf-8', float_format='%.17g')


def write_synthetic(path, n, p, seed, **kwargs):
    """Generate, write the CSV and a '<path>.params.json' sidecar; returns the dataset"""
    dataset, params = generate_synthetic(n, p, seed, **kwargs)
    write_dataset(dataset, path)
    sidecar = f"{path}.params.json"
    with open(sidecar, 'w', encoding='utf-8') as handle:
        json.dump(params, handle, indent=2, sort_keys=True)
    logger.info("Wrote %s and %s", path, sidecar)
    return dataset
