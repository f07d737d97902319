"""He initialization adapted for Leaky ReLU."""

from __future__ import annotations

import numpy as np


def he_gain(slope: float) -> float:
    """gain^2 = 2 / (1 + slope^2); slope 0 gives classic He."""
    return np.sqrt(2.0 / (1.0 + slope * slope))


def he_normal(
    shape: tuple[int, ...],
    fan_in: int,
    slope: float,
    rng: np.random.Generator,
    dtype=np.float32,
) -> np.ndarray:
    """Weights ~ Normal(0, gain^2 / fan_in)."""
    std = he_gain(slope) / np.sqrt(fan_in)
    return rng.normal(0.0, std, size=shape).astype(dtype)
