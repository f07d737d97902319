"""The four candidate training losses with analytic gradients."""

from __future__ import annotations

from enum import Enum

import numpy as np

from ..errors import ShapeError


class LossKind(str, Enum):
    L1 = "l1"
    MSE = "mse"
    MSLE = "msle"
    RMSE = "rmse"


def loss_with_grad(kind: LossKind, pred: np.ndarray, target: np.ndarray):
    """Scalar loss and its gradient with respect to ``pred``.

    MSLE clamps both operands to >= 0 before log1p so it stays defined on
    unbounded latent targets; RMSE is sqrt of batch MSE with the chain-rule
    gradient d/(N * rmse).
    """
    if pred.shape != target.shape:
        raise ShapeError(f"loss: pred shape {pred.shape} != target shape {target.shape}")
    kind = LossKind(kind)
    n = pred.size
    d = pred - target
    if kind is LossKind.L1:
        value = float(np.mean(np.abs(d), dtype=np.float64))
        grad = np.sign(d) / n
    elif kind is LossKind.MSE:
        value = float(np.mean(d * d, dtype=np.float64))
        grad = (2.0 / n) * d
    elif kind is LossKind.RMSE:
        mse = float(np.mean(d * d, dtype=np.float64))
        value = float(np.sqrt(mse))
        grad = d / (n * value) if value > 0 else np.zeros_like(d)
    else:  # MSLE
        pc = np.maximum(pred, 0.0)
        tc = np.maximum(target, 0.0)
        ld = np.log1p(pc) - np.log1p(tc)
        value = float(np.mean(ld * ld, dtype=np.float64))
        grad = np.where(pred >= 0, (2.0 / n) * ld / (1.0 + pc), 0.0).astype(pred.dtype)
    return value, grad.astype(pred.dtype, copy=False)


def loss(kind: LossKind, pred: np.ndarray, target: np.ndarray) -> float:
    return loss_with_grad(kind, pred, target)[0]
