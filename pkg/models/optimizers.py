import numpy as np

from utils.errors import ConfigError

OPTIMIZERS = ('sgd', 'adam')


class SGD:
    kind = 'sgd'

    def __init__(self, lr):
        self.lr = lr
        self.t = 0

    def step(self, params, grads):
        """In-place update: param -= lr * grad"""
        self.t += 1
        for name in params:
            params[name] -= self.lr * grads[name]

    def state_dict(self):
        return {'kind': self.kind, 'learning_rate': self.lr, 'step': self.t}


class Adam:
    kind = 'adam'

    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        # first and second moment estimates, shaped like the parameters
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads):
        """Bias-corrected Adam update applied in place"""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t

        for name in params:
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(params[name])
                self.v[name] = np.zeros_like(params[name])
            if self.m[name].shape != params[name].shape:
                raise ConfigError("optimizer state shape mismatch", parameter=name)

            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)

            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            params[name] -= self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)

    def state_dict(self):
        return {'kind': self.kind, 'learning_rate': self.lr, 'step': self.t,
                'beta1': self.beta1, 'beta2': self.beta2, 'epsilon': self.epsilon}


def make_optimizer(kind, lr):
    if lr is None or not np.isfinite(lr) or lr <= 0:
        raise ConfigError("learning rate must be a positive number", learning_rate=lr)
    if kind == 'sgd':
        return SGD(lr)
    if kind == 'adam':
        return Adam(lr)
    raise ConfigError("unknown optimizer", optimizer=kind, choices=list(OPTIMIZERS))


def optimizer_step(optimizer, model, grads):
    """Apply one update to the model's parameters; returns the model for chaining"""
    optimizer.step(model.params, grads)
    return model
