"""Stage 2: spatiotemporal predictors mapping a window of k feature maps to
the next feature map.

Six kinds: vector RNN / LSTM / GRU (flatten, project to the hidden size,
run stacked cells, project back), ConvLSTM (stacked convolutional LSTM
cells plus a 1x1 head), 3D-CNN (two depth-collapsing volume convolutions)
and CRNN (shared per-frame conv features into a convolutional Elman
recurrence). Output heads are linear for latent targets; the pixel-space
baseline uses a sigmoid head instead.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, ShapeError, WindowError
from .nn import functional as F
from .nn.cells import ConvElmanCell, ConvLSTMCell, ElmanCell, GRUCell, LSTMCell
from .nn.init import he_normal
from .nn.layers import Module
from .nn.losses import LossKind
from .nn.network import Model, register_model_kind
from .nn.optim import Optimizer, OptimizerKind, make_optimizer
from .training import TrainRun, TrainSchedule, fit


class SeqModelKind(str, Enum):
    RNN = "rnn"
    LSTM = "lstm"
    GRU = "gru"
    CNN3D = "cnn3d"
    CONVLSTM = "convlstm"
    CRNN = "crnn"


# kinds whose depth is controlled by the hidden-layer axis
LAYERED_KINDS = {SeqModelKind.RNN, SeqModelKind.LSTM, SeqModelKind.GRU, SeqModelKind.CONVLSTM}


@dataclass
class SeqModelConfig:
    kind: SeqModelKind
    hidden_size: int = 128
    hidden_layers: int | None = None
    loss: LossKind = LossKind.MSE
    optimizer: OptimizerKind = OptimizerKind.ADAM
    learning_rate: float = 0.001
    window: int = 5
    leaky_slope: float = 0.01
    output_activation: str = "linear"

    def __post_init__(self) -> None:
        self.kind = SeqModelKind(self.kind)
        self.loss = LossKind(self.loss)
        self.optimizer = OptimizerKind(self.optimizer)
        if self.kind in LAYERED_KINDS:
            if self.hidden_layers is None:
                raise ConfigError(f"{self.kind.value} requires hidden_layers")
            if self.hidden_layers < 1:
                raise ConfigError("hidden_layers must be >= 1")
        elif self.hidden_layers is not None:
            raise ConfigError(f"{self.kind.value} does not take hidden_layers")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.kind is SeqModelKind.CNN3D and self.window < 3:
            raise ConfigError("3D-CNN needs a window of at least 3 frames")
        if self.output_activation not in ("linear", "sigmoid"):
            raise ConfigError(f"unknown output activation {self.output_activation!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["loss"] = self.loss.value
        d["optimizer"] = self.optimizer.value
        return d


def make_windows(seq: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Sliding stride-1 windows over a (T, ...) sequence: inputs t..t+k-1
    predict target t+k, giving exactly T-k samples."""
    t = seq.shape[0]
    if t <= window:
        raise WindowError(f"sequence length {t} yields no windows of size {window}")
    inputs = np.stack([seq[i : i + window] for i in range(t - window)])
    targets = np.ascontiguousarray(seq[window:])
    return inputs, targets


def window_dataset(
    latents: np.ndarray, window: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Windows for every sequence of a (N, T, ...) stack, plus the sequence
    index each sample came from (for sequence-level fold assignment)."""
    all_inputs, all_targets, owners = [], [], []
    for i in range(latents.shape[0]):
        inp, tgt = make_windows(latents[i], window)
        all_inputs.append(inp)
        all_targets.append(tgt)
        owners.append(np.full(len(inp), i, dtype=np.int64))
    return (
        np.concatenate(all_inputs),
        np.concatenate(all_targets),
        np.concatenate(owners),
    )


class SeqPredictor(Model):
    """Common plumbing: config, latent geometry, output activation."""

    def __init__(self, config: SeqModelConfig, latent_shape: tuple[int, int, int], seed: int):
        super().__init__()
        self.config = config
        self.latent_shape = tuple(latent_shape)
        self.seed = seed

    def _check_input(self, x: np.ndarray) -> None:
        if x.ndim != 5 or x.shape[1] != self.config.window or tuple(x.shape[2:]) != self.latent_shape:
            raise ShapeError(
                f"expected (batch, {self.config.window}, {', '.join(map(str, self.latent_shape))}), "
                f"got {x.shape}"
            )

    def _activate(self, pred: np.ndarray) -> np.ndarray:
        if self.config.output_activation == "sigmoid":
            self._act_cache = F.sigmoid(pred)
            return self._act_cache
        return pred

    def _deactivate(self, dpred: np.ndarray) -> np.ndarray:
        if self.config.output_activation == "sigmoid":
            return F.sigmoid_backward(dpred, self._act_cache)
        return dpred

    def spec(self) -> dict:
        return {
            "model_kind": "seq_predictor",
            "config": self.config.to_dict(),
            "latent_shape": list(self.latent_shape),
            "seed": self.seed,
        }


class VectorRecurrentPredictor(SeqPredictor):
    """RNN / LSTM / GRU on flattened maps: dense projection into the hidden
    size, stacked cells over the window, dense projection back."""

    _CELLS = {SeqModelKind.RNN: ElmanCell, SeqModelKind.LSTM: LSTMCell, SeqModelKind.GRU: GRUCell}

    def __init__(self, config, latent_shape, seed):
        super().__init__(config, latent_shape, seed)
        rng = np.random.default_rng(seed)
        slope = config.leaky_slope
        d = int(np.prod(latent_shape))
        n = config.hidden_size
        self.in_proj = self.add_module(Module("in_proj"))
        self.in_proj._register("w", he_normal((d, n), d, slope, rng))
        self.in_proj._register("b", np.zeros(n, dtype=np.float32))
        cell_cls = self._CELLS[config.kind]
        self.cells = [
            self.add_module(cell_cls(f"cell{i}", n, n)) for i in range(config.hidden_layers)
        ]
        for cell in self.cells:
            cell.init_params(rng, slope)
        self.out_proj = self.add_module(Module("out_proj"))
        self.out_proj._register("w", he_normal((n, d), n, slope, rng))
        self.out_proj._register("b", np.zeros(d, dtype=np.float32))

    def forward(self, x, train=True):
        self._check_input(x)
        b, k = x.shape[:2]
        flat = x.reshape(b, k, -1)
        states = [cell.init_state(b, dtype=x.dtype) for cell in self.cells]
        self._in_caches, self._cell_caches = [], [[] for _ in self.cells]
        z = None
        for t in range(k):
            z, c = F.dense_forward(flat[:, t], self.in_proj.params["w"], self.in_proj.params["b"])
            self._in_caches.append(c)
            for layer, cell in enumerate(self.cells):
                z, states[layer], cache = cell.step(z, states[layer])
                self._cell_caches[layer].append(cache)
        out, self._out_cache = F.dense_forward(
            z, self.out_proj.params["w"], self.out_proj.params["b"]
        )
        self._x_shape = x.shape
        return self._activate(out.reshape(b, *self.latent_shape))

    def backward(self, dpred):
        dpred = self._deactivate(dpred)
        b = dpred.shape[0]
        k = self.config.window
        dout = dpred.reshape(b, -1)
        dh_top, dw, db = F.dense_backward(dout, self._out_cache, self.out_proj.params["w"])
        self.out_proj.grads["w"] += dw
        self.out_proj.grads["b"] += db
        zero = np.zeros_like(dh_top)
        dstates = [None] * len(self.cells)
        dx = np.zeros(self._x_shape, dtype=dpred.dtype)
        for t in reversed(range(k)):
            dh = dh_top if t == k - 1 else zero
            for layer in reversed(range(len(self.cells))):
                dh, dstates[layer] = self.cells[layer].backstep(
                    self._cell_caches[layer][t], dh, dstates[layer]
                )
            dz, dw, db = F.dense_backward(dh, self._in_caches[t], self.in_proj.params["w"])
            self.in_proj.grads["w"] += dw
            self.in_proj.grads["b"] += db
            dx[:, t] = dz.reshape(b, *self.latent_shape)
        return dx


class ConvLSTMPredictor(SeqPredictor):
    """Stacked ConvLSTM cells (3x3 kernels, hidden maps shaped like the
    input) with a 1x1 convolution head on the last hidden map."""

    def __init__(self, config, latent_shape, seed):
        super().__init__(config, latent_shape, seed)
        rng = np.random.default_rng(seed)
        slope = config.leaky_slope
        c = latent_shape[2]
        ch = config.hidden_size
        self.cells = []
        cin = c
        for i in range(config.hidden_layers):
            cell = self.add_module(ConvLSTMCell(f"cell{i}", cin, ch, kernel=3))
            cell.init_params(rng, slope)
            self.cells.append(cell)
            cin = ch
        self.head = self.add_module(Module("head"))
        self.head._register("w", he_normal((1, 1, ch, c), ch, slope, rng))
        self.head._register("b", np.zeros(c, dtype=np.float32))

    def forward(self, x, train=True):
        self._check_input(x)
        b, k = x.shape[:2]
        spatial = self.latent_shape[:2]
        states = [cell.init_state(b, dtype=x.dtype, spatial=spatial) for cell in self.cells]
        self._cell_caches = [[] for _ in self.cells]
        z = None
        for t in range(k):
            z = x[:, t]
            for layer, cell in enumerate(self.cells):
                z, states[layer], cache = cell.step(z, states[layer])
                self._cell_caches[layer].append(cache)
        out, self._head_cache = F.conv2d_forward(
            z, self.head.params["w"], self.head.params["b"], stride=1, padding=0
        )
        self._x_shape = x.shape
        return self._activate(out)

    def backward(self, dpred):
        dpred = self._deactivate(dpred)
        k = self.config.window
        dh_top, dw, db = F.conv2d_backward(dpred, self._head_cache, self.head.params["w"])
        self.head.grads["w"] += dw
        self.head.grads["b"] += db
        zero = np.zeros_like(dh_top)
        dstates = [None] * len(self.cells)
        dx = np.zeros(self._x_shape, dtype=dpred.dtype)
        for t in reversed(range(k)):
            dh = dh_top if t == k - 1 else zero
            for layer in reversed(range(len(self.cells))):
                dh, dstates[layer] = self.cells[layer].backstep(
                    self._cell_caches[layer][t], dh, dstates[layer]
                )
            dx[:, t] = dh
        return dx


class CNN3DPredictor(SeqPredictor):
    """Two volume convolutions collapse the window depth to one map: the
    first is 3x3x3 (valid over depth), the second spans whatever depth
    remains; leaky ReLU sits between."""

    def __init__(self, config, latent_shape, seed):
        super().__init__(config, latent_shape, seed)
        rng = np.random.default_rng(seed)
        slope = config.leaky_slope
        c = latent_shape[2]
        ch = config.hidden_size
        k = config.window
        depth_after = k - 3 + 1
        self.conv1 = self.add_module(Module("blk0_conv"))
        self.conv1._register("w", he_normal((3, 3, 3, c, ch), 27 * c, slope, rng))
        self.conv1._register("b", np.zeros(ch, dtype=np.float32))
        self.conv2 = self.add_module(Module("blk1_conv"))
        self.conv2._register(
            "w", he_normal((depth_after, 3, 3, ch, c), depth_after * 9 * ch, slope, rng)
        )
        self.conv2._register("b", np.zeros(c, dtype=np.float32))
        self.slope = slope

    def forward(self, x, train=True):
        self._check_input(x)
        y1, self._c1 = F.conv3d_forward(
            x, self.conv1.params["w"], self.conv1.params["b"], padding=(0, 1, 1)
        )
        a, self._ac = F.leaky_relu_forward(y1, self.slope)
        y2, self._c2 = F.conv3d_forward(
            a, self.conv2.params["w"], self.conv2.params["b"], padding=(0, 1, 1)
        )
        return self._activate(y2[:, 0])

    def backward(self, dpred):
        dpred = self._deactivate(dpred)[:, None]
        da, dw2, db2 = F.conv3d_backward(dpred, self._c2, self.conv2.params["w"])
        self.conv2.grads["w"] += dw2
        self.conv2.grads["b"] += db2
        dy1 = F.leaky_relu_backward(da, self._ac, self.slope)
        dx, dw1, db1 = F.conv3d_backward(dy1, self._c1, self.conv1.params["w"])
        self.conv1.grads["w"] += dw1
        self.conv1.grads["b"] += db1
        return dx


class CRNNPredictor(SeqPredictor):
    """Shared 3x3 conv feature extractor per timestep feeding a
    convolutional Elman recurrence, then a 1x1 head."""

    def __init__(self, config, latent_shape, seed):
        super().__init__(config, latent_shape, seed)
        rng = np.random.default_rng(seed)
        slope = config.leaky_slope
        c = latent_shape[2]
        ch = config.hidden_size
        self.feat = self.add_module(Module("feat_conv"))
        self.feat._register("w", he_normal((3, 3, c, ch), 9 * c, slope, rng))
        self.feat._register("b", np.zeros(ch, dtype=np.float32))
        self.cell = self.add_module(ConvElmanCell("rec", ch, ch, kernel=3))
        self.cell.init_params(rng, slope)
        self.head = self.add_module(Module("head"))
        self.head._register("w", he_normal((1, 1, ch, c), ch, slope, rng))
        self.head._register("b", np.zeros(c, dtype=np.float32))
        self.slope = slope

    def forward(self, x, train=True):
        self._check_input(x)
        b, k = x.shape[:2]
        state = self.cell.init_state(b, dtype=x.dtype, spatial=self.latent_shape[:2])
        self._feat_caches, self._act_caches, self._cell_caches = [], [], []
        h = None
        for t in range(k):
            f, fc = F.conv2d_forward(
                x[:, t], self.feat.params["w"], self.feat.params["b"], stride=1, padding=1
            )
            a, ac = F.leaky_relu_forward(f, self.slope)
            h, state, cc = self.cell.step(a, state)
            self._feat_caches.append(fc)
            self._act_caches.append(ac)
            self._cell_caches.append(cc)
        out, self._head_cache = F.conv2d_forward(
            h, self.head.params["w"], self.head.params["b"], stride=1, padding=0
        )
        self._x_shape = x.shape
        return self._activate(out)

    def backward(self, dpred):
        dpred = self._deactivate(dpred)
        k = self.config.window
        dh_last, dw, db = F.conv2d_backward(dpred, self._head_cache, self.head.params["w"])
        self.head.grads["w"] += dw
        self.head.grads["b"] += db
        zero = np.zeros_like(dh_last)
        dstate = None
        dx = np.zeros(self._x_shape, dtype=dpred.dtype)
        for t in reversed(range(k)):
            dh = dh_last if t == k - 1 else zero
            da, dstate = self.cell.backstep(self._cell_caches[t], dh, dstate)
            df = F.leaky_relu_backward(da, self._act_caches[t], self.slope)
            dxt, dwf, dbf = F.conv2d_backward(df, self._feat_caches[t], self.feat.params["w"])
            self.feat.grads["w"] += dwf
            self.feat.grads["b"] += dbf
            dx[:, t] = dxt
        return dx


_PREDICTORS = {
    SeqModelKind.RNN: VectorRecurrentPredictor,
    SeqModelKind.LSTM: VectorRecurrentPredictor,
    SeqModelKind.GRU: VectorRecurrentPredictor,
    SeqModelKind.CONVLSTM: ConvLSTMPredictor,
    SeqModelKind.CNN3D: CNN3DPredictor,
    SeqModelKind.CRNN: CRNNPredictor,
}


def build_seq_model(
    config: SeqModelConfig, latent_shape: tuple[int, int, int], seed: int = 0
) -> SeqPredictor:
    if len(latent_shape) != 3:
        raise ConfigError(f"latent shape must be (h, w, c), got {latent_shape}")
    return _PREDICTORS[config.kind](config, latent_shape, seed)


def predict_next(model: SeqPredictor, inputs: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Eval-mode prediction; accepts one window (k, h, w, c) or a batch."""
    single = inputs.ndim == 4
    if single:
        inputs = inputs[None]
    parts = [
        model.forward(inputs[i : i + batch_size], train=False)
        for i in range(0, len(inputs), batch_size)
    ]
    out = np.concatenate(parts)
    return out[0] if single else out


def train_seq_model(
    model: SeqPredictor,
    inputs: np.ndarray,
    targets: np.ndarray,
    val_inputs: np.ndarray | None = None,
    val_targets: np.ndarray | None = None,
    schedule: TrainSchedule | None = None,
    optimizer: Optimizer | None = None,
) -> TrainRun:
    if len(inputs) == 0:
        raise WindowError("no training samples")
    schedule = schedule or TrainSchedule()
    optimizer = optimizer or make_optimizer(model.config.optimizer, model.config.learning_rate)
    run = TrainRun(config=model.config.to_dict(), seed=model.seed)
    return fit(
        model,
        optimizer,
        model.config.loss,
        inputs,
        targets,
        val_inputs,
        val_targets,
        schedule,
        model.seed,
        run=run,
    )


def _build_from_spec(spec: dict) -> SeqPredictor:
    return build_seq_model(
        SeqModelConfig(**spec["config"]), tuple(spec["latent_shape"]), spec["seed"]
    )


register_model_kind("seq_predictor", _build_from_spec)
