import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.survival_model import ModelConfig, init_model  # noqa: E402
from utils.data_generator import generate_synthetic  # noqa: E402
from utils.survival_core import discretize_labels, km_quantile_grid  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def synthetic_dataset():
    dataset, _ = generate_synthetic(200, 4, seed=7)
    return dataset


@pytest.fixture
def survival_problem(synthetic_dataset):
    """Dataset with a 5-interval KM grid and discretized labels"""
    grid = km_quantile_grid(synthetic_dataset.times, synthetic_dataset.events, 5)
    labels = discretize_labels(synthetic_dataset, grid)
    return synthetic_dataset, grid, labels


@pytest.fixture
def write_csv(tmp_path):
    def _write(text, name="data.csv"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)
    return _write


def small_model(name, input_dim, num_intervals, seed=0, hidden_sizes=(8, 8)):
    return init_model(ModelConfig.from_name(name, num_intervals=num_intervals,
                                            input_dim=input_dim, seed=seed,
                                            hidden_sizes=hidden_sizes))
