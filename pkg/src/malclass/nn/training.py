"""Mini-batch training loop with validation-loss early stopping."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DivergenceError
from .optim import Adam, clip_grad_norm

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 10          # epochs without a new best validation loss
    dropout: float = 0.5
    seed: int = 0
    clip_norm: float | None = None

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.max_epochs <= 0:
            raise ConfigError("learning_rate, batch_size and max_epochs must be positive")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must be in [0, 1)")
        if not 0 < self.patience <= self.max_epochs:
            raise ConfigError("patience must be positive and at most max_epochs")


@dataclass
class EncodedDataset:
    """Integer-encoded inputs ready for a classifier."""

    inputs: np.ndarray    # (N, L) int32 token or char indices
    lengths: np.ndarray   # (N,) int64 true sequence lengths
    labels: np.ndarray    # (N,) int64 class indices

    def __len__(self):
        return len(self.inputs)

    def take(self, idx):
        return self.inputs[idx], self.lengths[idx], self.labels[idx]


class EarlyStopper:
    """Best-so-far tracker: stop after `patience` epochs without improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        if val_loss < self.best:
            self.best = val_loss
            self.best_epoch = epoch
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


@dataclass
class TrainResult:
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf
    stopped_early: bool = False

    def loss_history(self):
        return [(h["train_loss"], h["val_loss"]) for h in self.history]


def _epoch_eval_loss(model, dataset: EncodedDataset, batch_size: int) -> float:
    total, n = 0.0, len(dataset)
    for start in range(0, n, batch_size):
        xb, lb, yb = dataset.take(slice(start, start + batch_size))
        total += model.compute_loss(xb, lb, yb, train=False, want_grads=False) * len(xb)
    return total / n


def train(model, train_set: EncodedDataset, val_set: EncodedDataset,
          config: TrainConfig) -> TrainResult:
    """Train `model` in place; leaves it at the best-validation-loss weights.

    Batches are reshuffled every epoch with an RNG seeded from the config,
    so the full loss history is reproducible for a fixed seed.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ConfigError("train and validation sets must be non-empty")
    rng = np.random.default_rng(config.seed)
    optimizer = Adam(model.params(), lr=config.learning_rate)
    stopper = EarlyStopper(config.patience)
    result = TrainResult()
    best_state = None

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_set))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            xb, lb, yb = train_set.take(batch)
            loss = model.compute_loss(xb, lb, yb, train=True, want_grads=True)
            if not math.isfinite(loss):
                raise DivergenceError(f"training loss diverged at epoch {epoch} ({loss})")
            if config.clip_norm is not None:
                clip_grad_norm(model.params(), config.clip_norm)
            optimizer.step()
            total += loss * len(batch)
        train_loss = total / len(order)
        val_loss = _epoch_eval_loss(model, val_set, config.batch_size)
        if not math.isfinite(val_loss):
            raise DivergenceError(f"validation loss diverged at epoch {epoch} ({val_loss})")
        result.history.append(
            {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        if stopper.update(epoch, val_loss):
            best_state = {name: p.data.copy() for name, p in model.params()}
        logger.debug("epoch %d train %.6f val %.6f", epoch, train_loss, val_loss)
        if stopper.should_stop:
            result.stopped_early = True
            break

    result.best_epoch = stopper.best_epoch
    result.best_val_loss = stopper.best
    if best_state is not None:
        for name, p in model.params():
            p.data[...] = best_state[name]
    return result
