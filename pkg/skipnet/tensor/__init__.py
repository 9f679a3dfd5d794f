"""Dense tensors and forward kernels."""

from .conv import ConvSpec
from .core import (
    Precision,
    Tensor,
    as_tensor,
    check_finite,
    default_dtype,
    flat_index,
    freeze,
    get_precision,
    precision,
    zeros,
)
from .kernels import (
    col2im,
    conv2d,
    dense,
    elementwise_add,
    elementwise_mul,
    elementwise_mul_broadcast,
    im2col,
    log_softmax,
    maxpool2d,
    relu,
    sigmoid,
    softmax,
)

__all__ = [
    "ConvSpec",
    "Precision",
    "Tensor",
    "as_tensor",
    "check_finite",
    "col2im",
    "conv2d",
    "default_dtype",
    "dense",
    "elementwise_add",
    "elementwise_mul",
    "elementwise_mul_broadcast",
    "flat_index",
    "freeze",
    "get_precision",
    "im2col",
    "log_softmax",
    "maxpool2d",
    "precision",
    "relu",
    "sigmoid",
    "softmax",
    "zeros",
]
