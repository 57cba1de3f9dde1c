from .autodiff import Node, ParamBlock, Tape, UnrecordedOpError
from .ops import (ShapeError, affine, as_matrix, bce_with_logits, leaky_relu,
                  sigmoid, softplus, squared_error)
from .optim import OPTIMIZERS, OptimizerConfig, optimizer_step

__all__ = [
    "Node", "ParamBlock", "Tape", "UnrecordedOpError",
    "ShapeError", "affine", "as_matrix", "bce_with_logits", "leaky_relu",
    "sigmoid", "softplus", "squared_error",
    "OPTIMIZERS", "OptimizerConfig", "optimizer_step",
]
