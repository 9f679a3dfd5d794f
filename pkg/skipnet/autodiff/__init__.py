"""Reverse-mode automatic differentiation over the tensor kernels."""

from . import ops
from .gradcheck import (
    GradCheckReport,
    ParameterCheck,
    check_gradients,
    gradcheck,
    relative_error,
)
from .tape import Function, Node, Tape, backward, inject_gradient_fault

__all__ = [
    "Function",
    "GradCheckReport",
    "Node",
    "ParameterCheck",
    "Tape",
    "backward",
    "check_gradients",
    "gradcheck",
    "inject_gradient_fault",
    "ops",
    "relative_error",
]
