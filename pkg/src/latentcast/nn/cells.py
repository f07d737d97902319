"""Recurrent cells with per-timestep caches for backpropagation through time.

``step`` returns (output, new_state, cache); ``backstep`` consumes one cache
plus the incoming output/state gradients and returns (dx, dstate), adding
parameter gradients into the cell's accumulators. States reset to zeros at
the start of every window.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from . import functional as F
from .init import he_normal
from .layers import Module


class Cell(Module):
    def init_state(self, batch: int, dtype=np.float32):
        raise NotImplementedError

    def step(self, x, state):
        raise NotImplementedError

    def backstep(self, cache, dh, dstate):
        raise NotImplementedError


class ElmanCell(Cell):
    """h' = tanh(x Wx + h Wh + b)"""

    def __init__(self, name, input_size, hidden_size):
        super().__init__(name)
        self.input_size, self.hidden_size = input_size, hidden_size

    def init_params(self, rng, slope, dtype=np.float32):
        m, n = self.input_size, self.hidden_size
        self._register("wx", he_normal((m, n), m, slope, rng, dtype))
        self._register("wh", he_normal((n, n), n, slope, rng, dtype))
        self._register("b", np.zeros(n, dtype=dtype))

    def init_state(self, batch, dtype=np.float32):
        return (np.zeros((batch, self.hidden_size), dtype=dtype),)

    def step(self, x, state):
        (h,) = state
        h_new = np.tanh(x @ self.params["wx"] + h @ self.params["wh"] + self.params["b"])
        return h_new, (h_new,), (x, h, h_new)

    def backstep(self, cache, dh, dstate):
        x, h_prev, h_new = cache
        if dstate is not None:
            dh = dh + dstate[0]
        da = F.tanh_backward(dh, h_new)
        self.grads["wx"] += x.T @ da
        self.grads["wh"] += h_prev.T @ da
        self.grads["b"] += da.sum(axis=0)
        dx = da @ self.params["wx"].T
        dh_prev = da @ self.params["wh"].T
        return dx, (dh_prev,)

    def spec(self):
        return {
            "kind": "elman",
            "name": self.name,
            "input_size": self.input_size,
            "hidden_size": self.hidden_size,
        }


class LSTMCell(Cell):
    """Gates packed as [input, forget, candidate, output]."""

    def __init__(self, name, input_size, hidden_size):
        super().__init__(name)
        self.input_size, self.hidden_size = input_size, hidden_size

    def init_params(self, rng, slope, dtype=np.float32):
        m, n = self.input_size, self.hidden_size
        self._register("wx", he_normal((m, 4 * n), m, slope, rng, dtype))
        self._register("wh", he_normal((n, 4 * n), n, slope, rng, dtype))
        self._register("b", np.zeros(4 * n, dtype=dtype))

    def init_state(self, batch, dtype=np.float32):
        z = np.zeros((batch, self.hidden_size), dtype=dtype)
        return (z, z.copy())

    def step(self, x, state):
        h, c = state
        n = self.hidden_size
        z = x @ self.params["wx"] + h @ self.params["wh"] + self.params["b"]
        i = F.sigmoid(z[:, :n])
        f = F.sigmoid(z[:, n : 2 * n])
        g = np.tanh(z[:, 2 * n : 3 * n])
        o = F.sigmoid(z[:, 3 * n :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        return h_new, (h_new, c_new), (x, h, c, i, f, g, o, tc)

    def backstep(self, cache, dh, dstate):
        x, h_prev, c_prev, i, f, g, o, tc = cache
        dc_next = None
        if dstate is not None:
            dh = dh + dstate[0]
            dc_next = dstate[1]
        do = dh * tc
        dc = F.tanh_backward(dh * o, tc)
        if dc_next is not None:
            dc = dc + dc_next
        di, df, dg = dc * g, dc * c_prev, dc * i
        dz = np.concatenate(
            [
                F.sigmoid_backward(di, i),
                F.sigmoid_backward(df, f),
                F.tanh_backward(dg, g),
                F.sigmoid_backward(do, o),
            ],
            axis=1,
        )
        self.grads["wx"] += x.T @ dz
        self.grads["wh"] += h_prev.T @ dz
        self.grads["b"] += dz.sum(axis=0)
        dx = dz @ self.params["wx"].T
        dh_prev = dz @ self.params["wh"].T
        dc_prev = dc * f
        return dx, (dh_prev, dc_prev)

    def spec(self):
        return {
            "kind": "lstm",
            "name": self.name,
            "input_size": self.input_size,
            "hidden_size": self.hidden_size,
        }


class GRUCell(Cell):
    """Gates packed as [reset, update, candidate]; single bias set, reset gate
    applied to the hidden contribution of the candidate (parameter count
    3(nm + n^2 + n))."""

    def __init__(self, name, input_size, hidden_size):
        super().__init__(name)
        self.input_size, self.hidden_size = input_size, hidden_size

    def init_params(self, rng, slope, dtype=np.float32):
        m, n = self.input_size, self.hidden_size
        self._register("wx", he_normal((m, 3 * n), m, slope, rng, dtype))
        self._register("wh", he_normal((n, 3 * n), n, slope, rng, dtype))
        self._register("b", np.zeros(3 * n, dtype=dtype))

    def init_state(self, batch, dtype=np.float32):
        return (np.zeros((batch, self.hidden_size), dtype=dtype),)

    def step(self, x, state):
        (h,) = state
        n = self.hidden_size
        xa = x @ self.params["wx"] + self.params["b"]
        ha = h @ self.params["wh"]
        r = F.sigmoid(xa[:, :n] + ha[:, :n])
        u = F.sigmoid(xa[:, n : 2 * n] + ha[:, n : 2 * n])
        cand = np.tanh(xa[:, 2 * n :] + r * ha[:, 2 * n :])
        h_new = (1.0 - u) * cand + u * h
        return h_new, (h_new,), (x, h, ha, r, u, cand)

    def backstep(self, cache, dh, dstate):
        x, h_prev, ha, r, u, cand = cache
        n = self.hidden_size
        if dstate is not None:
            dh = dh + dstate[0]
        du = dh * (h_prev - cand)
        dcand = dh * (1.0 - u)
        dzc = F.tanh_backward(dcand, cand)
        dr = dzc * ha[:, 2 * n :]
        dzr = F.sigmoid_backward(dr, r)
        dzu = F.sigmoid_backward(du, u)
        dxa = np.concatenate([dzr, dzu, dzc], axis=1)
        dha = np.concatenate([dzr, dzu, dzc * r], axis=1)
        self.grads["wx"] += x.T @ dxa
        self.grads["wh"] += h_prev.T @ dha
        self.grads["b"] += dxa.sum(axis=0)
        dx = dxa @ self.params["wx"].T
        dh_prev = dha @ self.params["wh"].T + dh * u
        return dx, (dh_prev,)

    def spec(self):
        return {
            "kind": "gru",
            "name": self.name,
            "input_size": self.input_size,
            "hidden_size": self.hidden_size,
        }


class ConvLSTMCell(Cell):
    """LSTM whose input-to-state and state-to-state transforms are a single
    3x3 convolution over the channel-concatenated (input, hidden) maps; the
    hidden state is shaped like the input map with ``hidden_channels``."""

    def __init__(self, name, in_channels, hidden_channels, kernel=3):
        super().__init__(name)
        if kernel % 2 != 1:
            raise ConfigError("ConvLSTM kernel must be odd so the state keeps its shape")
        self.in_channels, self.hidden_channels, self.kernel = in_channels, hidden_channels, kernel
        self._spatial: tuple[int, int] | None = None

    def init_params(self, rng, slope, dtype=np.float32):
        k, ci, ch = self.kernel, self.in_channels, self.hidden_channels
        self._register("w", he_normal((k, k, ci + ch, 4 * ch), k * k * (ci + ch), slope, rng, dtype))
        self._register("b", np.zeros(4 * ch, dtype=dtype))

    def init_state(self, batch, dtype=np.float32, spatial: tuple[int, int] | None = None):
        if spatial is None:
            spatial = self._spatial
        h, w = spatial
        z = np.zeros((batch, h, w, self.hidden_channels), dtype=dtype)
        return (z, z.copy())

    def step(self, x, state):
        self._spatial = x.shape[1:3]
        h, c = state
        ch = self.hidden_channels
        xc = np.concatenate([x, h], axis=3)
        z, conv_cache = F.conv2d_forward(
            xc, self.params["w"], self.params["b"], stride=1, padding=self.kernel // 2
        )
        i = F.sigmoid(z[..., :ch])
        f = F.sigmoid(z[..., ch : 2 * ch])
        g = np.tanh(z[..., 2 * ch : 3 * ch])
        o = F.sigmoid(z[..., 3 * ch :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        return h_new, (h_new, c_new), (conv_cache, c, i, f, g, o, tc)

    def backstep(self, cache, dh, dstate):
        conv_cache, c_prev, i, f, g, o, tc = cache
        dc_next = None
        if dstate is not None:
            dh = dh + dstate[0]
            dc_next = dstate[1]
        do = dh * tc
        dc = F.tanh_backward(dh * o, tc)
        if dc_next is not None:
            dc = dc + dc_next
        dz = np.concatenate(
            [
                F.sigmoid_backward(dc * g, i),
                F.sigmoid_backward(dc * c_prev, f),
                F.tanh_backward(dc * i, g),
                F.sigmoid_backward(do, o),
            ],
            axis=3,
        )
        dxc, dw, db = F.conv2d_backward(dz, conv_cache, self.params["w"])
        self.grads["w"] += dw
        self.grads["b"] += db
        dx = dxc[..., : self.in_channels]
        dh_prev = dxc[..., self.in_channels :]
        dc_prev = dc * f
        return dx, (dh_prev, dc_prev)

    def spec(self):
        return {
            "kind": "convlstm",
            "name": self.name,
            "in_channels": self.in_channels,
            "hidden_channels": self.hidden_channels,
            "kernel": self.kernel,
        }


class ConvElmanCell(Cell):
    """Elman recurrence with convolutional input-to-state and state-to-state
    transforms (tanh), used by the convolutional-RNN predictor."""

    def __init__(self, name, in_channels, hidden_channels, kernel=3):
        super().__init__(name)
        if kernel % 2 != 1:
            raise ConfigError("ConvElman kernel must be odd so the state keeps its shape")
        self.in_channels, self.hidden_channels, self.kernel = in_channels, hidden_channels, kernel
        self._spatial: tuple[int, int] | None = None

    def init_params(self, rng, slope, dtype=np.float32):
        k, ci, ch = self.kernel, self.in_channels, self.hidden_channels
        self._register("w", he_normal((k, k, ci + ch, ch), k * k * (ci + ch), slope, rng, dtype))
        self._register("b", np.zeros(ch, dtype=dtype))

    def init_state(self, batch, dtype=np.float32, spatial: tuple[int, int] | None = None):
        if spatial is None:
            spatial = self._spatial
        h, w = spatial
        return (np.zeros((batch, h, w, self.hidden_channels), dtype=dtype),)

    def step(self, x, state):
        self._spatial = x.shape[1:3]
        (h,) = state
        xc = np.concatenate([x, h], axis=3)
        z, conv_cache = F.conv2d_forward(
            xc, self.params["w"], self.params["b"], stride=1, padding=self.kernel // 2
        )
        h_new = np.tanh(z)
        return h_new, (h_new,), (conv_cache, h_new)

    def backstep(self, cache, dh, dstate):
        conv_cache, h_new = cache
        if dstate is not None:
            dh = dh + dstate[0]
        dz = F.tanh_backward(dh, h_new)
        dxc, dw, db = F.conv2d_backward(dz, conv_cache, self.params["w"])
        self.grads["w"] += dw
        self.grads["b"] += db
        return dxc[..., : self.in_channels], (dxc[..., self.in_channels :],)

    def spec(self):
        return {
            "kind": "conv_elman",
            "name": self.name,
            "in_channels": self.in_channels,
            "hidden_channels": self.hidden_channels,
            "kernel": self.kernel,
        }


_CELL_KINDS = {
    "elman": ElmanCell,
    "lstm": LSTMCell,
    "gru": GRUCell,
    "convlstm": ConvLSTMCell,
    "conv_elman": ConvElmanCell,
}


def cell_from_spec(spec: dict) -> Cell:
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind not in _CELL_KINDS:
        raise ConfigError(f"unknown cell kind {kind!r}")
    return _CELL_KINDS[kind](**spec)
