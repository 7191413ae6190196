"""Minimal dense NN engine with exact manual gradients."""

from .gradcheck import grad_check
from .optim import Adam, clip_grad_norm
from .tensor import Tensor
from .training import EncodedDataset, EarlyStopper, TrainConfig, TrainResult, train

__all__ = [
    "Tensor", "Adam", "clip_grad_norm", "grad_check",
    "EncodedDataset", "EarlyStopper", "TrainConfig", "TrainResult", "train",
]
