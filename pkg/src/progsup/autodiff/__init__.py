"""Minimal reverse-mode automatic differentiation on numpy arrays."""

from . import functional
from .functional import ShapeError
from .gradcheck import grad_check, numerical_grad
from .nn import Module, init_normal, init_ones, init_zeros
from .optim import Adam, AdamState, adam_step
from .tensor import Parameter, Tape, Tensor, backward, current_tape

__all__ = [
    "Adam", "AdamState", "Module", "Parameter", "ShapeError", "Tape", "Tensor",
    "adam_step", "backward", "current_tape", "functional", "grad_check",
    "init_normal", "init_ones", "init_zeros", "numerical_grad",
]
