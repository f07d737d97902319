"""Minimal differentiable-network core: layers, recurrent cells, losses,
optimizers, He initialization, checkpointing and gradient checking."""

from . import functional
from .cells import Cell, ConvElmanCell, ConvLSTMCell, ElmanCell, GRUCell, LSTMCell, cell_from_spec
from .gradcheck import check_model_gradients, finite_difference, max_relative_error
from .init import he_gain, he_normal
from .layers import (
    BatchNorm,
    Conv2D,
    Conv3D,
    ConvTranspose2D,
    Dense,
    Flatten,
    Layer,
    LeakyReLU,
    Module,
    Reshape,
    Sigmoid,
    layer_from_spec,
)
from .losses import LossKind, loss, loss_with_grad
from .network import (
    Model,
    Sequential,
    load_checkpoint,
    register_model_kind,
    save_checkpoint,
)
from .optim import Adam, Optimizer, OptimizerKind, RMSProp, make_optimizer

__all__ = [
    "Adam",
    "BatchNorm",
    "Cell",
    "Conv2D",
    "Conv3D",
    "ConvElmanCell",
    "ConvLSTMCell",
    "ConvTranspose2D",
    "Dense",
    "ElmanCell",
    "Flatten",
    "GRUCell",
    "LSTMCell",
    "Layer",
    "LeakyReLU",
    "LossKind",
    "Model",
    "Module",
    "Optimizer",
    "OptimizerKind",
    "RMSProp",
    "Reshape",
    "Sequential",
    "Sigmoid",
    "cell_from_spec",
    "check_model_gradients",
    "finite_difference",
    "functional",
    "he_gain",
    "he_normal",
    "layer_from_spec",
    "load_checkpoint",
    "loss",
    "loss_with_grad",
    "make_optimizer",
    "max_relative_error",
    "register_model_kind",
    "save_checkpoint",
]
