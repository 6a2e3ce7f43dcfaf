"""Tensor conventions and validation helpers.

A tensor here is a C-contiguous numpy float32 array.  Activations are laid
out ``[batch, height, width, channels]``; convolution weights are
``[kernel_h, kernel_w, in_channels, out_channels]``, which keeps channel
concatenation contiguous.  float64 is accepted everywhere as an opt-in
high-precision path (used by the gradient-check harness).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import NumericError, ShapeError

Tensor = np.ndarray

FLOAT_DTYPES = (np.float32, np.float64)


def as_tensor(data, dtype=np.float32) -> np.ndarray:
    """Coerce ``data`` to a contiguous float tensor with extents >= 1."""
    arr = np.ascontiguousarray(data, dtype=dtype)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if any(e < 1 for e in arr.shape):
        raise ShapeError(f"tensor extents must be >= 1, got shape {arr.shape}")
    return arr


def require_rank(x: np.ndarray, rank: int, what: str) -> None:
    if x.ndim != rank:
        raise ShapeError(f"{what} must have rank {rank}, got shape {tuple(x.shape)}")


def require_float(x: np.ndarray, what: str) -> None:
    if x.dtype not in FLOAT_DTYPES:
        raise ShapeError(f"{what} must be float32/float64, got dtype {x.dtype}")


def check_finite(x: np.ndarray, what: str) -> np.ndarray:
    """Raise NumericError if ``x`` contains NaN or infinity.

    Overflow anywhere in the numeric core is an error, never a silent value.
    """
    if not np.all(np.isfinite(x)):
        bad = int(np.size(x) - np.count_nonzero(np.isfinite(x)))
        raise NumericError(f"{what} contains {bad} non-finite value(s)")
    return x


def zeros(shape: Sequence[int], dtype=np.float32) -> np.ndarray:
    return np.zeros(tuple(shape), dtype=dtype)
