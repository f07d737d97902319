"""Shared minibatch training loop with early stopping on validation loss."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingAbortError
from .nn.losses import LossKind, loss_with_grad
from .nn.network import Model
from .nn.optim import Optimizer

logger = logging.getLogger(__name__)


@dataclass
class TrainSchedule:
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    min_delta: float = 0.0
    shuffle: bool = True
    restore_best: bool = True  # False keeps the last-step parameters (exact-resume runs)


@dataclass
class TrainRun:
    """Outcome of one training: loss curves, selected epoch, final metrics."""

    config: dict
    seed: int
    train_curve: list[float] = field(default_factory=list)
    val_curve: list[float] = field(default_factory=list)
    best_epoch: int = -1
    final_train_loss: float = math.nan
    final_val_loss: float = math.nan
    final_test_loss: float | None = None
    fold_mean: float | None = None
    fold_std: float | None = None
    checkpoint_path: str | None = None

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "train_curve": self.train_curve,
            "val_curve": self.val_curve,
            "best_epoch": self.best_epoch,
            "final_train_loss": self.final_train_loss,
            "final_val_loss": self.final_val_loss,
            "final_test_loss": self.final_test_loss,
            "fold_mean": self.fold_mean,
            "fold_std": self.fold_std,
            "checkpoint_path": self.checkpoint_path,
        }


def predict_batched(model: Model, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
    parts = [model.forward(x[i : i + batch_size], train=False) for i in range(0, len(x), batch_size)]
    return np.concatenate(parts, axis=0)


def evaluate_loss(
    model: Model, x: np.ndarray, y: np.ndarray, loss_kind: LossKind, batch_size: int = 64
) -> float:
    """Mean per-element loss over a dataset in eval mode (batch-size independent)."""
    total = 0.0
    for i in range(0, len(x), batch_size):
        pred = model.forward(x[i : i + batch_size], train=False)
        value, _ = loss_with_grad(loss_kind, pred, y[i : i + batch_size])
        total += value * len(pred)
    return total / len(x)


def fit(
    model: Model,
    optimizer: Optimizer,
    loss_kind: LossKind,
    train_x: np.ndarray,
    train_y: np.ndarray,
    val_x: np.ndarray | None,
    val_y: np.ndarray | None,
    schedule: TrainSchedule,
    seed: int,
    run: TrainRun | None = None,
    shuffle_rng: np.random.Generator | None = None,
) -> TrainRun:
    """Minibatch training; keeps and restores the best-validation snapshot.

    With no validation set, early stopping tracks the training loss instead.
    Fully deterministic in (seed, data order, schedule).
    """
    if run is None:
        run = TrainRun(config={}, seed=seed)
    loss_kind = LossKind(loss_kind)
    rng = shuffle_rng if shuffle_rng is not None else np.random.default_rng(seed)
    n = len(train_x)
    have_val = val_x is not None and len(val_x) > 0
    best = math.inf
    best_snapshot = model.snapshot()
    stale = 0
    for epoch in range(schedule.max_epochs):
        order = rng.permutation(n) if schedule.shuffle else np.arange(n)
        epoch_loss = 0.0
        for start in range(0, n, schedule.batch_size):
            idx = order[start : start + schedule.batch_size]
            model.zero_grads()
            pred = model.forward(train_x[idx], train=True)
            value, dpred = loss_with_grad(loss_kind, pred, train_y[idx])
            if not math.isfinite(value):
                raise TrainingAbortError(
                    f"non-finite {loss_kind.value} loss at epoch {epoch}, step {start // schedule.batch_size}"
                )
            model.backward(dpred)
            optimizer.step(model.params(), model.grads())
            epoch_loss += value * len(idx)
        train_loss = epoch_loss / n
        run.train_curve.append(train_loss)
        if have_val:
            val_loss = evaluate_loss(model, val_x, val_y, loss_kind, schedule.batch_size)
            run.val_curve.append(val_loss)
        else:
            val_loss = train_loss
        logger.debug("epoch %d train=%.6g val=%.6g", epoch, train_loss, val_loss)
        if val_loss < best - schedule.min_delta:
            best = val_loss
            best_snapshot = model.snapshot()
            run.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale > schedule.patience:
                break
    if schedule.restore_best:
        model.restore(best_snapshot)
    run.final_train_loss = evaluate_loss(model, train_x, train_y, loss_kind, schedule.batch_size)
    run.final_val_loss = (
        evaluate_loss(model, val_x, val_y, loss_kind, schedule.batch_size)
        if have_val
        else run.final_train_loss
    )
    return run
