"""From-scratch dense training engine: kernels, layers, losses, Adam, and
finite-difference gradient checking. Everything runs in float64."""

from . import gradcheck, kernels
from .layers import (
    BatchNorm,
    Dropout,
    Layer,
    Linear,
    LogSoftmax,
    ReLU,
    Sequential,
    Sigmoid,
    check_matrix,
)
from .losses import LossValue, bce_loss, mae_loss, nll_loss
from .optim import Adam

__all__ = [
    "Adam",
    "BatchNorm",
    "Dropout",
    "Layer",
    "Linear",
    "LogSoftmax",
    "LossValue",
    "ReLU",
    "Sequential",
    "Sigmoid",
    "bce_loss",
    "check_matrix",
    "gradcheck",
    "kernels",
    "mae_loss",
    "nll_loss",
]
