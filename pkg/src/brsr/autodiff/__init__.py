"""Minimal reverse-mode autodiff for the 1D networks in this package."""

from .tensor import NonFiniteError, Parameter, Tensor, as_tensor, grad_enabled, no_grad
from . import functional
from .gradcheck import GradCheckReport, gradient_check
from .nn import Module
from .optim import Adam

__all__ = [
    "Adam", "GradCheckReport", "Module", "NonFiniteError", "Parameter", "Tensor",
    "as_tensor", "functional", "grad_enabled", "gradient_check", "no_grad",
]
