import logging

import numpy as np

from models.optimizers import make_optimizer
from utils.errors import TrainingDivergedError
from utils.fingerprint import derive_seed

logger = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 256


def run_epoch(model, optimizer, X, labels, batch_size, seed):
    """One pass over the data in seeded, shuffled mini-batches"""
    n = X.shape[0]
    order = np.random.default_rng(seed).permutation(n)
    for start in range(0, n, batch_size):
        batch = order[start:start + batch_size]
        grads = model.gradient(X[batch], labels.subset(batch))
        optimizer.step(model.params, grads)


def train_local(model, optimizer, X, labels, epochs, batch_size, seed,
                centre_id=0, first_epoch=0, round_index=None):
    """Run consecutive local epochs; epoch e is shuffled with derive_seed(seed, centre_id, e)"""
    for epoch in range(first_epoch, first_epoch + epochs):
        run_epoch(model, optimizer, X, labels, batch_size,
                  derive_seed(seed, centre_id, epoch))
        if not model.is_finite():
            raise TrainingDivergedError("non-finite parameters during local training",
                                        centre=centre_id, round=round_index, epoch=epoch,
                                        learning_rate=optimizer.lr)
    return model


def train_pooled(model, X, labels, epochs, learning_rate, batch_size=DEFAULT_BATCH_SIZE,
                 optimizer='adam', seed=0):
    """Centralised training on all rows; equivalent to a single-centre federation"""
    local = model.copy()
    opt = make_optimizer(optimizer, learning_rate)
    train_local(local, opt, np.asarray(X, dtype=float), labels, epochs, batch_size, seed)
    logger.debug("Pooled training finished: %d epochs, lr=%g, loss=%.5f",
                 epochs, learning_rate, local.nll_loss(X, labels))
    return local
