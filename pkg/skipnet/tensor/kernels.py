"""Forward numerical kernels over NCHW tensors.

Convolution goes through im2col followed by one batched matmul; the strided
window view follows the usual numpy ``as_strided`` recipe. Every kernel
preserves the floating dtype of its inputs.
"""

import numpy as np
import numpy.typing as npt
from numpy.lib.stride_tricks import as_strided

from skipnet.errors import ConfigurationError, DimensionError
from skipnet.tensor.conv import ConvSpec
from skipnet.tensor.core import Tensor, freeze


def _require_rank(tensor: Tensor, rank: int, what: str) -> None:
    if tensor.ndim != rank:
        raise DimensionError(
            f"{what} must be {rank}-d, got shape {tuple(tensor.shape)}"
        )


def im2col(x: Tensor, spec: ConvSpec) -> Tensor:
    """
    Unfold every receptive field of ``x`` into a column.

    Args:
        x: Input of shape (N, C, H, W)
        spec: Convolution geometry

    Returns:
        Array of shape (N, C*kh*kw, H_out*W_out); row order is (c, i, j)
    """
    _require_rank(x, 4, "im2col input")
    n, c, h, w = x.shape
    h_out, w_out = spec.output_size(h, w)
    padded = np.pad(
        x, ((0, 0), (0, 0), (spec.pad_h, spec.pad_h), (spec.pad_w, spec.pad_w))
    )
    sn, sc, sh, sw = padded.strides
    patches = as_strided(
        padded,
        shape=(n, c, spec.kernel_h, spec.kernel_w, h_out, w_out),
        strides=(
            sn,
            sc,
            spec.dilation_h * sh,
            spec.dilation_w * sw,
            spec.stride_h * sh,
            spec.stride_w * sw,
        ),
        writeable=False,
    )
    return patches.reshape(n, c * spec.kernel_h * spec.kernel_w, h_out * w_out)


def col2im(
    cols: Tensor, x_shape: tuple[int, int, int, int], spec: ConvSpec
) -> Tensor:
    """Scatter-add columns back onto an image; the adjoint of ``im2col``."""
    n, c, h, w = x_shape
    h_out, w_out = spec.output_size(h, w)
    padded = np.zeros(
        (n, c, h + 2 * spec.pad_h, w + 2 * spec.pad_w), dtype=cols.dtype
    )
    cols = cols.reshape(n, c, spec.kernel_h, spec.kernel_w, h_out, w_out)
    for i in range(spec.kernel_h):
        h_start = i * spec.dilation_h
        h_stop = h_start + spec.stride_h * (h_out - 1) + 1
        for j in range(spec.kernel_w):
            w_start = j * spec.dilation_w
            w_stop = w_start + spec.stride_w * (w_out - 1) + 1
            padded[
                :, :, h_start:h_stop:spec.stride_h, w_start:w_stop:spec.stride_w
            ] += cols[:, :, i, j]
    return padded[:, :, spec.pad_h : spec.pad_h + h, spec.pad_w : spec.pad_w + w]


def conv2d(
    x: Tensor, weight: Tensor, bias: Tensor | None, spec: ConvSpec
) -> Tensor:
    """
    2-d cross-correlation with stride, symmetric zero padding and dilation.

    Args:
        x: Input of shape (N, C_in, H, W)
        weight: Filters of shape (C_out, C_in, kh, kw)
        bias: Per-output-channel offset of shape (C_out,), or None
        spec: Convolution geometry

    Returns:
        Output of shape (N, C_out, H_out, W_out)

    Raises:
        DimensionError: If channel or kernel axes disagree
        ConfigurationError: If the output extent would be empty
    """
    validate_conv(x, weight, bias, spec)
    out, _ = conv2d_with_columns(x, weight, bias, spec)
    return out


def validate_conv(
    x: Tensor, weight: Tensor, bias: Tensor | None, spec: ConvSpec
) -> None:
    """Shape checks shared by ``conv2d`` and its differentiable wrapper."""
    _require_rank(x, 4, "conv2d input")
    _require_rank(weight, 4, "conv2d weight")
    _, c_in, h, w = x.shape
    c_out, w_in, kh, kw = weight.shape
    if w_in != c_in:
        raise DimensionError(
            f"conv2d: input axis 1 (channels) is {c_in} but weight axis 1 is {w_in}"
        )
    if (kh, kw) != (spec.kernel_h, spec.kernel_w):
        raise DimensionError(
            f"conv2d: weight axes 2,3 are {kh}x{kw} but spec kernel is "
            f"{spec.kernel_h}x{spec.kernel_w}"
        )
    if bias is not None and bias.shape != (c_out,):
        raise DimensionError(
            f"conv2d: bias shape {tuple(bias.shape)} does not match weight axis 0 "
            f"({c_out})"
        )
    spec.output_size(h, w)


def conv2d_with_columns(
    x: Tensor, weight: Tensor, bias: Tensor | None, spec: ConvSpec
) -> tuple[Tensor, Tensor]:
    """Unchecked ``conv2d`` that also hands back the im2col matrix for backward."""
    n, _, h, w = x.shape
    c_out = weight.shape[0]
    h_out, w_out = spec.output_size(h, w)
    cols = im2col(x, spec)
    out = np.matmul(weight.reshape(c_out, -1), cols)
    if bias is not None:
        out = out + bias[None, :, None]
    return freeze(out.reshape(n, c_out, h_out, w_out)), cols


def maxpool2d(
    x: Tensor, window_h: int, window_w: int, stride_h: int, stride_w: int
) -> tuple[Tensor, npt.NDArray[np.int64]]:
    """
    Max over sliding windows.

    Returns:
        (pooled, argmax) where argmax holds, per output element, the row-major
        offset ``h * W + w`` of the winning input inside its (H, W) plane.
        Ties go to the lowest offset.

    Raises:
        ConfigurationError: If the window does not fit the input
    """
    _require_rank(x, 4, "maxpool2d input")
    if min(window_h, window_w, stride_h, stride_w) < 1:
        raise ConfigurationError("maxpool2d window and stride must be positive")
    n, c, h, w = x.shape
    if window_h > h or window_w > w:
        raise ConfigurationError(
            f"maxpool2d window {window_h}x{window_w} larger than input {h}x{w}"
        )
    h_out = (h - window_h) // stride_h + 1
    w_out = (w - window_w) // stride_w + 1
    x = np.ascontiguousarray(x)
    sn, sc, sh, sw = x.strides
    windows = as_strided(
        x,
        shape=(n, c, h_out, w_out, window_h, window_w),
        strides=(sn, sc, stride_h * sh, stride_w * sw, sh, sw),
        writeable=False,
    ).reshape(n, c, h_out, w_out, window_h * window_w)
    local = windows.argmax(axis=-1)
    pooled = np.take_along_axis(windows, local[..., None], axis=-1)[..., 0]
    rows = np.arange(h_out)[:, None] * stride_h + local // window_w
    cols = np.arange(w_out)[None, :] * stride_w + local % window_w
    argmax = (rows * w + cols).astype(np.int64)
    argmax.setflags(write=False)
    return freeze(pooled), argmax


def dense(x: Tensor, weight: Tensor, bias: Tensor | None) -> Tensor:
    """Affine map ``x @ weight.T + bias`` for x of shape (N, F_in)."""
    _require_rank(x, 2, "dense input")
    _require_rank(weight, 2, "dense weight")
    if x.shape[1] != weight.shape[1]:
        raise DimensionError(
            f"dense: input axis 1 is {x.shape[1]} but weight axis 1 is "
            f"{weight.shape[1]}"
        )
    out = x @ weight.T
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise DimensionError(
                f"dense: bias shape {tuple(bias.shape)} does not match weight "
                f"axis 0 ({weight.shape[0]})"
            )
        out = out + bias
    return freeze(out)


def relu(x: Tensor) -> Tensor:
    return freeze(np.maximum(x, 0))


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function, kept strictly inside (0, 1) at the dtype's resolution."""
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1 / (1 + e), e / (1 + e)).astype(x.dtype, copy=False)
    finfo = np.finfo(out.dtype)
    return freeze(np.clip(out, finfo.tiny, 1 - finfo.epsneg))


def softmax(x: Tensor) -> Tensor:
    """Row-wise softmax of a (N, K) tensor, max-shifted for stability."""
    _require_rank(x, 2, "softmax input")
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return freeze(e / e.sum(axis=1, keepdims=True))


def log_softmax(x: Tensor) -> Tensor:
    """Row-wise log-softmax of a (N, K) tensor via log-sum-exp."""
    _require_rank(x, 2, "log_softmax input")
    shifted = x - x.max(axis=1, keepdims=True)
    return freeze(shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True)))


def elementwise_add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(
            f"add: shapes {tuple(a.shape)} and {tuple(b.shape)} differ"
        )
    return freeze(a + b)


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(
            f"mul: shapes {tuple(a.shape)} and {tuple(b.shape)} differ"
        )
    return freeze(a * b)


def elementwise_mul_broadcast(a: Tensor, m: Tensor) -> Tensor:
    """
    Multiply every channel of ``a`` (N, C, H, W) by a single-channel map
    ``m`` (N, 1, H, W). No other broadcast is accepted.
    """
    _require_rank(a, 4, "broadcast-mul input")
    _require_rank(m, 4, "broadcast-mul map")
    n, _, h, w = a.shape
    if m.shape != (n, 1, h, w):
        raise DimensionError(
            f"broadcast-mul: map shape {tuple(m.shape)} must be ({n}, 1, {h}, {w}) "
            f"for input {tuple(a.shape)}"
        )
    return freeze(a * m)
