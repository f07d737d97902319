"""Feedforward layers: named parameters, cached forward, accumulating backward.

Each layer carries a serializable spec dict so checkpoints can rebuild the
architecture; ``layer_from_spec`` is the inverse factory.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ShapeError
from . import functional as F
from .init import he_normal


class Module:
    """Anything owning named parameters with one gradient slot each."""

    def __init__(self, name: str):
        self.name = name
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def _register(self, key: str, value: np.ndarray) -> None:
        self.params[key] = value
        self.grads[key] = np.zeros_like(value)

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0

    def init_params(self, rng: np.random.Generator, slope: float, dtype=np.float32) -> None:
        """Default: no parameters."""

    def spec(self) -> dict:
        raise NotImplementedError


class Layer(Module):
    """Single-cache feedforward layer (forward immediately followed by
    backward, as in minibatch training)."""

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv2D(Layer):
    def __init__(self, name, in_channels, out_channels, kernel=3, stride=2, padding=1):
        super().__init__(name)
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride, self.padding = kernel, stride, padding
        self._cache = None

    def init_params(self, rng, slope, dtype=np.float32):
        k, cin, cout = self.kernel, self.in_channels, self.out_channels
        self._register("w", he_normal((k, k, cin, cout), k * k * cin, slope, rng, dtype))
        self._register("b", np.zeros(cout, dtype=dtype))

    def forward(self, x, train=True):
        try:
            y, self._cache = F.conv2d_forward(
                x, self.params["w"], self.params["b"], self.stride, self.padding
            )
        except ShapeError as exc:
            raise ShapeError(f"layer {self.name!r}: {exc}") from None
        return y

    def backward(self, dy):
        dx, dw, db = F.conv2d_backward(dy, self._cache, self.params["w"])
        self.grads["w"] += dw
        self.grads["b"] += db
        return dx

    def spec(self):
        return {
            "kind": "conv2d",
            "name": self.name,
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel": self.kernel,
            "stride": self.stride,
            "padding": self.padding,
        }


class ConvTranspose2D(Layer):
    def __init__(self, name, in_channels, out_channels, kernel=3, stride=2, padding=1,
                 output_padding=1):
        super().__init__(name)
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride = kernel, stride
        self.padding, self.output_padding = padding, output_padding
        self._cache = None

    def init_params(self, rng, slope, dtype=np.float32):
        k, cin, cout = self.kernel, self.in_channels, self.out_channels
        self._register("w", he_normal((k, k, cin, cout), k * k * cin, slope, rng, dtype))
        self._register("b", np.zeros(cout, dtype=dtype))

    def forward(self, x, train=True):
        try:
            y, self._cache = F.conv_transpose2d_forward(
                x, self.params["w"], self.params["b"], self.stride, self.padding,
                self.output_padding,
            )
        except ShapeError as exc:
            raise ShapeError(f"layer {self.name!r}: {exc}") from None
        return y

    def backward(self, dy):
        dx, dw, db = F.conv_transpose2d_backward(dy, self._cache, self.params["w"])
        self.grads["w"] += dw
        self.grads["b"] += db
        return dx

    def spec(self):
        return {
            "kind": "conv_transpose2d",
            "name": self.name,
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel": self.kernel,
            "stride": self.stride,
            "padding": self.padding,
            "output_padding": self.output_padding,
        }


class Conv3D(Layer):
    def __init__(self, name, in_channels, out_channels, kernel=(3, 3, 3), padding=(0, 1, 1)):
        super().__init__(name)
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.padding = tuple(kernel), tuple(padding)
        self._cache = None

    def init_params(self, rng, slope, dtype=np.float32):
        kd, kh, kw = self.kernel
        cin, cout = self.in_channels, self.out_channels
        self._register(
            "w", he_normal((kd, kh, kw, cin, cout), kd * kh * kw * cin, slope, rng, dtype)
        )
        self._register("b", np.zeros(cout, dtype=dtype))

    def forward(self, x, train=True):
        try:
            y, self._cache = F.conv3d_forward(x, self.params["w"], self.params["b"], self.padding)
        except ShapeError as exc:
            raise ShapeError(f"layer {self.name!r}: {exc}") from None
        return y

    def backward(self, dy):
        dx, dw, db = F.conv3d_backward(dy, self._cache, self.params["w"])
        self.grads["w"] += dw
        self.grads["b"] += db
        return dx

    def spec(self):
        return {
            "kind": "conv3d",
            "name": self.name,
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel": list(self.kernel),
            "padding": list(self.padding),
        }


class Dense(Layer):
    def __init__(self, name, in_features, out_features):
        super().__init__(name)
        self.in_features, self.out_features = in_features, out_features
        self._cache = None

    def init_params(self, rng, slope, dtype=np.float32):
        self._register(
            "w", he_normal((self.in_features, self.out_features), self.in_features, slope, rng,
                           dtype)
        )
        self._register("b", np.zeros(self.out_features, dtype=dtype))

    def forward(self, x, train=True):
        try:
            y, self._cache = F.dense_forward(x, self.params["w"], self.params["b"])
        except ShapeError as exc:
            raise ShapeError(f"layer {self.name!r}: {exc}") from None
        return y

    def backward(self, dy):
        dx, dw, db = F.dense_backward(dy, self._cache, self.params["w"])
        self.grads["w"] += dw
        self.grads["b"] += db
        return dx

    def spec(self):
        return {
            "kind": "dense",
            "name": self.name,
            "in_features": self.in_features,
            "out_features": self.out_features,
        }


class BatchNorm(Layer):
    """Per-channel batch normalization with running statistics for eval."""

    def __init__(self, name, channels, momentum=0.9, eps=1e-5):
        super().__init__(name)
        self.channels, self.momentum, self.eps = channels, momentum, eps
        self.running_mean: np.ndarray | None = None
        self.running_var: np.ndarray | None = None
        self._cache = None

    def init_params(self, rng, slope, dtype=np.float32):
        self._register("gamma", np.ones(self.channels, dtype=dtype))
        self._register("beta", np.zeros(self.channels, dtype=dtype))
        self.running_mean = np.zeros(self.channels, dtype=dtype)
        self.running_var = np.ones(self.channels, dtype=dtype)

    def forward(self, x, train=True):
        if x.shape[-1] != self.channels:
            raise ShapeError(
                f"layer {self.name!r}: expected {self.channels} channels, got {x.shape[-1]}"
            )
        y, self._cache = F.batchnorm_forward(
            x, self.params["gamma"], self.params["beta"], self.running_mean, self.running_var,
            self.momentum, self.eps, train,
        )
        return y

    def backward(self, dy):
        dx, dgamma, dbeta = F.batchnorm_backward(dy, self._cache, self.params["gamma"])
        self.grads["gamma"] += dgamma
        self.grads["beta"] += dbeta
        return dx

    def buffers(self) -> dict[str, np.ndarray]:
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def spec(self):
        return {
            "kind": "batchnorm",
            "name": self.name,
            "channels": self.channels,
            "momentum": self.momentum,
            "eps": self.eps,
        }


class LeakyReLU(Layer):
    def __init__(self, name, slope=0.01):
        super().__init__(name)
        self.slope = slope
        self._cache = None

    def forward(self, x, train=True):
        y, self._cache = F.leaky_relu_forward(x, self.slope)
        return y

    def backward(self, dy):
        return F.leaky_relu_backward(dy, self._cache, self.slope)

    def spec(self):
        return {"kind": "leaky_relu", "name": self.name, "slope": self.slope}


class Sigmoid(Layer):
    def __init__(self, name):
        super().__init__(name)
        self._cache = None

    def forward(self, x, train=True):
        self._cache = F.sigmoid(x)
        return self._cache

    def backward(self, dy):
        return F.sigmoid_backward(dy, self._cache)

    def spec(self):
        return {"kind": "sigmoid", "name": self.name}


class Flatten(Layer):
    def __init__(self, name):
        super().__init__(name)
        self._shape = None

    def forward(self, x, train=True):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)

    def spec(self):
        return {"kind": "flatten", "name": self.name}


class Reshape(Layer):
    def __init__(self, name, target_shape):
        super().__init__(name)
        self.target_shape = tuple(target_shape)
        self._shape = None

    def forward(self, x, train=True):
        self._shape = x.shape
        return x.reshape((x.shape[0], *self.target_shape))

    def backward(self, dy):
        return dy.reshape(self._shape)

    def spec(self):
        return {"kind": "reshape", "name": self.name, "target_shape": list(self.target_shape)}


_LAYER_KINDS = {
    "conv2d": Conv2D,
    "conv_transpose2d": ConvTranspose2D,
    "conv3d": Conv3D,
    "dense": Dense,
    "batchnorm": BatchNorm,
    "leaky_relu": LeakyReLU,
    "sigmoid": Sigmoid,
    "flatten": Flatten,
    "reshape": Reshape,
}


def layer_from_spec(spec: dict) -> Layer:
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind not in _LAYER_KINDS:
        raise ConfigError(f"unknown layer kind {kind!r}")
    return _LAYER_KINDS[kind](**spec)
