"""Minimal differentiable-network engine and the segmentation variants."""

from .gradcheck import gradient_check
from .model import NetConfig, Network, VARIANTS, build_model, default_config, toy_config
from .ops import (
    BNState,
    apply_primitive,
    batchnorm,
    bce_loss,
    concat,
    conv2d_same,
    conv_transpose2,
    dice_loss,
    dropout,
    loss,
    maxpool2,
    maxpool3s1,
    pixel_accuracy,
    relu,
    sigmoid,
    upsample2,
)
from .optim import Adam, adam_update
from .tensor import Tensor
from .train import TrainHistory, evaluate, train
from .weights_io import inspect_weights, load_weights, save_weights

__all__ = [
    "Adam",
    "BNState",
    "NetConfig",
    "Network",
    "Tensor",
    "TrainHistory",
    "VARIANTS",
    "adam_update",
    "apply_primitive",
    "batchnorm",
    "bce_loss",
    "build_model",
    "concat",
    "conv2d_same",
    "conv_transpose2",
    "default_config",
    "dice_loss",
    "dropout",
    "evaluate",
    "gradient_check",
    "inspect_weights",
    "load_weights",
    "loss",
    "maxpool2",
    "maxpool3s1",
    "pixel_accuracy",
    "relu",
    "save_weights",
    "sigmoid",
    "toy_config",
    "train",
    "upsample2",
]
