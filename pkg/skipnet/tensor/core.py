"""Tensor value type and the process-wide precision mode.

A Tensor is a C-contiguous numpy array (row-major, NCHW for activations).
Kernels never write into their inputs and return read-only arrays, so a
tensor handed out by an op can be shared freely.
"""

from collections.abc import Iterator
from contextlib import contextmanager
from contextvars import ContextVar
from enum import StrEnum
from typing import Any, TypeAlias

import numpy as np
import numpy.typing as npt

from skipnet.errors import ConfigurationError, NumericError

Tensor: TypeAlias = npt.NDArray[np.floating[Any]]


class Precision(StrEnum):
    """Floating-point width used for newly created tensors."""

    FLOAT32 = "float32"
    FLOAT64 = "float64"

    @property
    def dtype(self) -> np.dtype[Any]:
        return np.dtype(self.value)


_precision: ContextVar[Precision] = ContextVar("precision", default=Precision.FLOAT32)


def get_precision() -> Precision:
    """Precision active in the current context."""
    return _precision.get()


def default_dtype() -> np.dtype[Any]:
    return _precision.get().dtype


@contextmanager
def precision(mode: Precision | str) -> Iterator[Precision]:
    """Run a block with a different tensor precision.

    64-bit mode exists for finite-difference gradient checking; training runs
    in 32-bit.
    """
    try:
        resolved = Precision(mode)
    except ValueError as e:
        raise ConfigurationError(f"Unknown precision: {mode}") from e
    token = _precision.set(resolved)
    try:
        yield resolved
    finally:
        _precision.reset(token)


def as_tensor(data: Any, dtype: npt.DTypeLike | None = None) -> Tensor:
    """Copy ``data`` into a fresh contiguous tensor of the active precision."""
    array = np.array(data, dtype=dtype or default_dtype(), copy=True, order="C")
    return freeze(array)


def zeros(shape: tuple[int, ...], dtype: npt.DTypeLike | None = None) -> Tensor:
    return freeze(np.zeros(shape, dtype=dtype or default_dtype()))


def freeze(array: npt.NDArray[Any]) -> npt.NDArray[Any]:
    """Mark an op result read-only (0-d results stay 0-d)."""
    array = np.asarray(array)
    if not array.flags.c_contiguous:
        array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


def check_finite(tensor: Tensor, where: str) -> Tensor:
    """Raise NumericError if ``tensor`` holds a NaN or infinity."""
    if not np.all(np.isfinite(tensor)):
        bad = int(np.count_nonzero(~np.isfinite(tensor)))
        raise NumericError(f"{bad} non-finite value(s) produced by {where}")
    return tensor


def flat_index(shape: tuple[int, int, int, int], n: int, c: int, h: int, w: int) -> int:
    """Row-major offset of element (n, c, h, w) in an NCHW tensor."""
    _, channels, height, width = shape
    return ((n * channels + c) * height + h) * width + w
