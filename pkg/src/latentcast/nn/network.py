"""Model base class, sequential container, and checkpoint IO.

A checkpoint is a directory: one ``.npy`` file per parameter, buffer and
optimizer slot, plus ``manifest.json`` tying names to files along with the
model spec, optimizer config, step count and RNG state, so training resumes
bitwise-identically.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Callable

import numpy as np

from ..dataio import parse_array_file, write_array_file
from ..errors import CheckpointError, ShapeError
from .layers import BatchNorm, Layer, Module
from .optim import Optimizer, optimizer_from_config

MANIFEST_NAME = "manifest.json"


class Model:
    """Collection of named modules exposing one flat parameter store."""

    def __init__(self):
        self._modules: list[Module] = []

    def add_module(self, module: Module) -> Module:
        self._modules.append(module)
        return module

    def modules(self) -> list[Module]:
        return list(self._modules)

    def params(self) -> dict[str, np.ndarray]:
        return {f"{m.name}.{k}": v for m in self._modules for k, v in m.params.items()}

    def grads(self) -> dict[str, np.ndarray]:
        return {f"{m.name}.{k}": v for m in self._modules for k, v in m.grads.items()}

    def buffers(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for m in self._modules:
            if isinstance(m, BatchNorm):
                for k, v in m.buffers().items():
                    out[f"{m.name}.{k}"] = v
        return out

    def zero_grads(self) -> None:
        for m in self._modules:
            m.zero_grads()

    def set_params(self, flat: dict[str, np.ndarray]) -> None:
        own = self.params()
        for name, value in flat.items():
            if name not in own:
                raise CheckpointError(f"unknown parameter {name!r}")
            if own[name].shape != value.shape:
                raise ShapeError(
                    f"parameter {name!r}: stored shape {value.shape} != model shape {own[name].shape}"
                )
            np.copyto(own[name], value)

    def set_buffers(self, flat: dict[str, np.ndarray]) -> None:
        own = self.buffers()
        for name, value in flat.items():
            if name in own:
                np.copyto(own[name], value)

    def param_count(self) -> int:
        return sum(v.size for v in self.params().values())

    def cast(self, dtype) -> "Model":
        """Re-type every parameter, gradient slot and buffer (float64 is the
        gradient-check shadow path)."""
        for m in self._modules:
            for k in list(m.params):
                m.params[k] = m.params[k].astype(dtype)
                m.grads[k] = m.grads[k].astype(dtype)
            if isinstance(m, BatchNorm):
                m.running_mean = m.running_mean.astype(dtype)
                m.running_var = m.running_var.astype(dtype)
        return self

    def snapshot(self) -> dict[str, np.ndarray]:
        state = {k: v.copy() for k, v in self.params().items()}
        state.update({k: v.copy() for k, v in self.buffers().items()})
        return state

    def restore(self, snapshot: dict[str, np.ndarray]) -> None:
        own = self.params()
        bufs = self.buffers()
        for name, value in snapshot.items():
            target = own.get(name, bufs.get(name))
            if target is not None:
                np.copyto(target, value)

    # subclasses provide the actual computation
    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError


class Sequential(Model):
    def __init__(self, layers: list[Layer] | None = None):
        super().__init__()
        self.layers: list[Layer] = []
        for layer in layers or []:
            self.append(layer)

    def append(self, layer: Layer) -> Layer:
        self.layers.append(layer)
        return self.add_module(layer)

    def forward(self, x, train=True):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def spec(self):
        return {"kind": "sequential", "layers": [layer.spec() for layer in self.layers]}


# -- checkpointing -------------------------------------------------------------

_MODEL_BUILDERS: dict[str, Callable[[dict], Model]] = {}


def register_model_kind(kind: str, builder: Callable[[dict], Model]) -> None:
    _MODEL_BUILDERS[kind] = builder


def _array_filename(name: str) -> str:
    return name.replace("/", "_") + ".npy"


def save_checkpoint(
    path: str | Path,
    model: Model,
    optimizer: Optimizer | None = None,
    rng_state: dict | None = None,
    extra: dict | None = None,
) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    params = model.params()
    buffers = model.buffers()
    for name, arr in {**params, **buffers}.items():
        write_array_file(path / _array_filename(name), arr)
    manifest: dict = {
        "format": "latentcast-checkpoint",
        "version": 1,
        "model": model.spec(),
        "params": {name: _array_filename(name) for name in params},
        "buffers": {name: _array_filename(name) for name in buffers},
        "extra": extra or {},
    }
    if optimizer is not None:
        slot_files: dict[str, dict[str, str]] = {}
        for pname, slots in optimizer.state.items():
            slot_files[pname] = {}
            for slot, arr in slots.items():
                fname = _array_filename(f"opt__{slot}__{pname}")
                write_array_file(path / fname, arr)
                slot_files[pname][slot] = fname
        manifest["optimizer"] = {"config": optimizer.config(), "step": optimizer.t,
                                 "state": slot_files}
    if rng_state is not None:
        manifest["rng_state"] = rng_state
    (path / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, default=str))
    return path


def _read_array(path: Path) -> np.ndarray:
    shape, values = parse_array_file(path.read_bytes())
    return values.copy()  # frombuffer views are read-only; state must be writable


def load_checkpoint(path: str | Path):
    """Rebuild (model, optimizer, manifest); optimizer is None if the
    checkpoint carries no optimizer state."""
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.exists():
        raise CheckpointError(f"no {MANIFEST_NAME} in {path}")
    manifest = json.loads(manifest_path.read_text())
    model_spec = manifest["model"]
    kind = model_spec.get("model_kind")
    if kind not in _MODEL_BUILDERS:
        raise CheckpointError(f"no builder registered for model kind {kind!r}")
    model = _MODEL_BUILDERS[kind](model_spec)
    model.set_params({n: _read_array(path / f) for n, f in manifest["params"].items()})
    model.set_buffers({n: _read_array(path / f) for n, f in manifest.get("buffers", {}).items()})
    optimizer = None
    if "optimizer" in manifest:
        opt_info = manifest["optimizer"]
        optimizer = optimizer_from_config(opt_info["config"])
        optimizer.t = opt_info["step"]
        for pname, slots in opt_info["state"].items():
            optimizer.state[pname] = {
                slot: _read_array(path / fname) for slot, fname in slots.items()
            }
    return model, optimizer, manifest
