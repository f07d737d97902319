"""Adam and RMSProp parameter updates over named parameter stores."""

from __future__ import annotations

from enum import Enum

import numpy as np

from ..errors import NonFiniteGradientError


class OptimizerKind(str, Enum):
    ADAM = "adam"
    RMSPROP = "rmsprop"


class Optimizer:
    """Keeps one state slot set per parameter name; ``step`` mutates the
    parameter arrays in place."""

    kind: OptimizerKind

    def __init__(self, learning_rate: float):
        if learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {learning_rate}")
        self.learning_rate = learning_rate
        self.t = 0
        self.state: dict[str, dict[str, np.ndarray]] = {}

    def _slots(self, name: str, like: np.ndarray, keys: tuple[str, ...]) -> dict[str, np.ndarray]:
        if name not in self.state:
            self.state[name] = {k: np.zeros_like(like) for k in keys}
        return self.state[name]

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for name, g in grads.items():
            if not np.isfinite(g).all():
                raise NonFiniteGradientError(f"non-finite gradient for parameter {name!r}")
            self._update(name, params[name], g)

    def _update(self, name: str, p: np.ndarray, g: np.ndarray) -> None:
        raise NotImplementedError

    def config(self) -> dict:
        raise NotImplementedError


class Adam(Optimizer):
    kind = OptimizerKind.ADAM

    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        super().__init__(learning_rate)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def _update(self, name, p, g):
        s = self._slots(name, p, ("m", "v"))
        m, v = s["m"], s["v"]
        m *= self.beta1
        m += (1.0 - self.beta1) * g
        v *= self.beta2
        v += (1.0 - self.beta2) * g * g
        m_hat = m / (1.0 - self.beta1**self.t)
        v_hat = v / (1.0 - self.beta2**self.t)
        p -= (self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype, copy=False)

    def config(self):
        return {
            "kind": self.kind.value,
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
        }


class RMSProp(Optimizer):
    kind = OptimizerKind.RMSPROP

    def __init__(self, learning_rate: float, alpha: float = 0.99, eps: float = 1e-8):
        super().__init__(learning_rate)
        self.alpha, self.eps = alpha, eps

    def _update(self, name, p, g):
        s = self._slots(name, p, ("sq",))["sq"]
        s *= self.alpha
        s += (1.0 - self.alpha) * g * g
        p -= (self.learning_rate * g / (np.sqrt(s) + self.eps)).astype(p.dtype, copy=False)

    def config(self):
        return {
            "kind": self.kind.value,
            "learning_rate": self.learning_rate,
            "alpha": self.alpha,
            "eps": self.eps,
        }


def make_optimizer(kind: OptimizerKind | str, learning_rate: float, **kwargs) -> Optimizer:
    kind = OptimizerKind(kind)
    if kind is OptimizerKind.ADAM:
        return Adam(learning_rate, **kwargs)
    return RMSProp(learning_rate, **kwargs)


def optimizer_from_config(config: dict) -> Optimizer:
    cfg = dict(config)
    return make_optimizer(cfg.pop("kind"), cfg.pop("learning_rate"), **cfg)
