"""Discrete-time Cox model with a linear or dense predictor and a PH or non-PH head.

Hazards are h_{it} = sigmoid(logit_{it}). With the PH head the logit is
alpha_t + g(x_i) for a scalar g shared across intervals; with the non-PH head
every interval has its own output weights. Gradients are derived by hand for
this fixed architecture family.
"""

import json
import logging
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Tuple

import numpy as np
from scipy.special import expit, log_expit

from utils.errors import ConfigError, DataError
from utils.survival_core import StepFunction, survival_from_hazards

logger = logging.getLogger(__name__)

LOGIT_CLAMP = 30.0
DEFAULT_HIDDEN_SIZES = (32, 32)
PREDICTORS = ('linear', 'dense')
HEADS = ('ph', 'nonph')
ACTIVATIONS = ('relu',)
REDUCTIONS = ('mean', 'sum')


@dataclass(frozen=True)
class ModelConfig:
    predictor: str
    head: str
    num_intervals: int
    input_dim: int
    hidden_sizes: Tuple[int, ...] = field(default=DEFAULT_HIDDEN_SIZES)
    activation: str = 'relu'
    seed: int = 0

    def __post_init__(self):
        if self.predictor not in PREDICTORS:
            raise ConfigError("unknown predictor", predictor=self.predictor)
        if self.head not in HEADS:
            raise ConfigError("unknown output head", head=self.head)
        if self.predictor == 'linear' and self.head == 'nonph':
            raise ConfigError("a linear predictor supports only the PH head",
                              predictor=self.predictor, head=self.head)
        if self.activation not in ACTIVATIONS:
            raise ConfigError("unsupported activation", activation=self.activation)
        if self.num_intervals < 1 or self.input_dim < 1:
            raise ConfigError("num_intervals and input_dim must be at least 1",
                              num_intervals=self.num_intervals, input_dim=self.input_dim)
        hidden = tuple(int(size) for size in self.hidden_sizes)
        if any(size < 1 for size in hidden):
            raise ConfigError("hidden sizes must be positive", hidden_sizes=hidden)
        # A linear predictor is a dense network without hidden layers
        if self.predictor == 'linear':
            hidden = ()
        object.__setattr__(self, 'hidden_sizes', hidden)

    @classmethod
    def from_name(cls, name, num_intervals, input_dim, seed=0, hidden_sizes=DEFAULT_HIDDEN_SIZES):
        """Build a config from a model name: linear-ph, nn-ph or nn-nonph"""
        presets = {
            'linear-ph': ('linear', 'ph'),
            'nn-ph': ('dense', 'ph'),
            'nn-nonph': ('dense', 'nonph'),
        }
        if name not in presets:
            raise ConfigError("unknown model", model=name, choices=sorted(presets))
        predictor, head = presets[name]
        return cls(predictor=predictor, head=head, num_intervals=num_intervals,
                   input_dim=input_dim, hidden_sizes=tuple(hidden_sizes), seed=seed)

    def parameter_shapes(self):
        """Ordered parameter names and shapes; a deterministic function of the config"""
        shapes = OrderedDict()
        fan_in = self.input_dim
        for i, width in enumerate(self.hidden_sizes):
            shapes[f'hidden_{i}.weight'] = (fan_in, width)
            shapes[f'hidden_{i}.bias'] = (width,)
            fan_in = width
        if self.head == 'ph':
            shapes['risk.weight'] = (fan_in, 1)
            shapes['baseline.bias'] = (self.num_intervals,)
        else:
            shapes['head.weight'] = (fan_in, self.num_intervals)
            shapes['head.bias'] = (self.num_intervals,)
        return shapes


class SurvivalModel:
    def __init__(self, config, parameters):
        self.config = config
        expected = config.parameter_shapes()
        if list(parameters) != list(expected):
            raise ConfigError("parameter names do not match the config",
                              expected=list(expected), got=list(parameters))
        for name, shape in expected.items():
            if tuple(np.shape(parameters[name])) != shape:
                raise ConfigError("parameter shape mismatch", parameter=name,
                                  expected=shape, got=tuple(np.shape(parameters[name])))
        self.params = OrderedDict((name, np.array(value, dtype=float))
                                  for name, value in parameters.items())

    @property
    def num_parameters(self):
        return int(sum(value.size for value in self.params.values()))

    def copy(self):
        return SurvivalModel(self.config, self.get_parameters())

    def get_parameters(self):
        return OrderedDict((name, value.copy()) for name, value in self.params.items())

    def set_parameters(self, parameters):
        for name in self.params:
            self.params[name] = np.array(parameters[name], dtype=float)

    def is_finite(self):
        return all(np.all(np.isfinite(value)) for value in self.params.values())

    def _check_input(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.config.input_dim:
            raise DataError("input dimension mismatch",
                            expected=self.config.input_dim, got=X.shape[1])
        return X

    def _forward_cache(self, X):
        activations = [X]
        pre_activations = []
        a = X
        for i in range(len(self.config.hidden_sizes)):
            z = a @ self.params[f'hidden_{i}.weight'] + self.params[f'hidden_{i}.bias']
            pre_activations.append(z)
            a = np.maximum(z, 0.0)
            activations.append(a)

        if self.config.head == 'ph':
            risk = a @ self.params['risk.weight']
            logits = risk + self.params['baseline.bias']
        else:
            logits = a @ self.params['head.weight'] + self.params['head.bias']
        return logits, activations, pre_activations

    def logits(self, X):
        """Unclamped per-interval logits (n x m)"""
        logits, _, _ = self._forward_cache(self._check_input(X))
        return logits

    def forward(self, X):
        """Hazard matrix (n x m) with every entry strictly inside (0, 1)"""
        logits = np.clip(self.logits(X), -LOGIT_CLAMP, LOGIT_CLAMP)
        return expit(logits)

    @staticmethod
    def _targets(labels, n, m):
        intervals = np.asarray(labels.intervals)
        if len(intervals) != n:
            raise DataError("labels and inputs differ in length", inputs=n, labels=len(intervals))
        if np.any(intervals < 0) or np.any(intervals >= m):
            raise DataError("label interval outside the model grid", num_intervals=m)
        columns = np.arange(m)[np.newaxis, :]
        active = columns <= intervals[:, np.newaxis]
        observed = (columns == intervals[:, np.newaxis]) & np.asarray(labels.events)[:, np.newaxis]
        return active, observed.astype(float)

    def per_sample_loss(self, X, labels):
        """Negative log-likelihood of each individual over intervals 0..interval_i"""
        X = self._check_input(X)
        logits = np.clip(self._forward_cache(X)[0], -LOGIT_CLAMP, LOGIT_CLAMP)
        active, observed = self._targets(labels, X.shape[0], self.config.num_intervals)
        log_lik = observed * log_expit(logits) + (1.0 - observed) * log_expit(-logits)
        return -np.sum(np.where(active, log_lik, 0.0), axis=1)

    def nll_loss(self, X, labels, reduction='mean'):
        if reduction not in REDUCTIONS:
            raise ConfigError("unknown reduction", reduction=reduction)
        losses = self.per_sample_loss(X, labels)
        return float(losses.sum() if reduction == 'sum' else losses.mean())

    def gradient(self, X, labels, reduction='mean'):
        """Exact reverse-mode gradients of nll_loss with respect to every parameter"""
        if reduction not in REDUCTIONS:
            raise ConfigError("unknown reduction", reduction=reduction)
        X = self._check_input(X)
        n = X.shape[0]
        raw_logits, activations, pre_activations = self._forward_cache(X)
        active, observed = self._targets(labels, n, self.config.num_intervals)

        inside = (raw_logits > -LOGIT_CLAMP) & (raw_logits < LOGIT_CLAMP)
        hazards = expit(np.clip(raw_logits, -LOGIT_CLAMP, LOGIT_CLAMP))
        grad_logits = np.where(active & inside, hazards - observed, 0.0)
        if reduction == 'mean':
            grad_logits = grad_logits / n

        grads = OrderedDict()
        last = activations[-1]
        if self.config.head == 'ph':
            grad_risk = grad_logits.sum(axis=1, keepdims=True)
            grads['risk.weight'] = last.T @ grad_risk
            grads['baseline.bias'] = grad_logits.sum(axis=0)
            grad_a = grad_risk @ self.params['risk.weight'].T
        else:
            grads['head.weight'] = last.T @ grad_logits
            grads['head.bias'] = grad_logits.sum(axis=0)
            grad_a = grad_logits @ self.params['head.weight'].T

        for i in reversed(range(len(self.config.hidden_sizes))):
            grad_z = grad_a * (pre_activations[i] > 0)
            grads[f'hidden_{i}.weight'] = activations[i].T @ grad_z
            grads[f'hidden_{i}.bias'] = grad_z.sum(axis=0)
            grad_a = grad_z @ self.params[f'hidden_{i}.weight'].T

        return OrderedDict((name, grads[name]) for name in self.params)

    def predict_survival_matrix(self, X):
        """Survival at each cut: column j holds S(tau_{j+1} | x)"""
        return survival_from_hazards(self.forward(X))

    def predict_survival(self, X, grid):
        """One survival step function per row on the grid cuts"""
        if grid.m != self.config.num_intervals:
            raise ConfigError("grid size does not match the model",
                              grid=grid.m, num_intervals=self.config.num_intervals)
        survival = self.predict_survival_matrix(X)
        return [StepFunction(grid.cuts.copy(), row) for row in survival]

    def to_dict(self):
        config = asdict(self.config)
        config['hidden_sizes'] = list(self.config.hidden_sizes)
        return {
            'config': config,
            'parameters': {name: {'shape': list(value.shape), 'values': value.ravel().tolist()}
                           for name, value in self.params.items()}
        }

    @classmethod
    def from_dict(cls, payload):
        config_data = dict(payload['config'])
        config_data['hidden_sizes'] = tuple(config_data.get('hidden_sizes', ()))
        config = ModelConfig(**config_data)
        parameters = OrderedDict()
        for name in config.parameter_shapes():
            entry = payload['parameters'][name]
            parameters[name] = np.asarray(entry['values'], dtype=float).reshape(entry['shape'])
        return cls(config, parameters)

    def save(self, path):
        with open(path, 'w', encoding='utf-8') as handle:
            json.dump(self.to_dict(), handle)

    @classmethod
    def load(cls, path):
        with open(path, 'r', encoding='utf-8') as handle:
            return cls.from_dict(json.load(handle))


def init_model(config):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) layers; PH baseline biases start at zero"""
    rng = np.random.default_rng(config.seed)
    parameters = OrderedDict()
    for name, shape in config.parameter_shapes().items():
        if name == 'baseline.bias':
            parameters[name] = np.zeros(shape)
            continue
        layer = name.split('.')[0]
        fan_in = config.parameter_shapes()[f'{layer}.weight'][0]
        bound = 1.0 / np.sqrt(fan_in)
        parameters[name] = rng.uniform(-bound, bound, size=shape)
    model = SurvivalModel(config, parameters)
    logger.debug("Initialised %s/%s model with %d parameters",
                 config.predictor, config.head, model.num_parameters)
    return model


def forward(model, X):
    return model.forward(X)


def nll_loss(model, X, labels, reduction='mean'):
    return model.nll_loss(X, labels, reduction=reduction)


def gradient(model, X, labels, reduction='mean'):
    return model.gradient(X, labels, reduction=reduction)


def predict_survival(model, X, grid):
    return model.predict_survival(X, grid)
