"""Numeric primitives: convolution, pooling, channel concat, ReLU.

Every primitive comes as a ``*_fwd``/``*_bwd`` pair.  The forward returns
``(output, cache)``; the backward consumes the upstream gradient plus that
cache and returns analytic gradients for each input.  The public single-name
wrappers (``conv2d``, ``max_pool``, ...) validate contracts and return the
output alone.

Conventions (deliberate, documented choices):

* ``conv2d`` computes cross-correlation (no kernel flip), the convention of
  every architecture this package reconstructs.
* ``same`` padding is symmetric zeros with the extra pixel on the
  bottom/right when the total is odd; with stride 1 it preserves spatial
  extents, with stride ``s`` the output extent is ``ceil(in / s)``.
* ``valid`` output extent is ``floor((in - kernel) / stride) + 1``.
* Accumulation is float32 end to end; ``conv2d(..., accumulate_fp64=True)``
  upcasts the patch/weight matrices for a float64 GEMM when extra headroom
  is wanted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import ContractError, ShapeError
from .tensor import check_finite, require_float, require_rank

PADDINGS = ("same", "valid")


@dataclass(frozen=True)
class ConvGeometry:
    """Kernel extents, stride and padding mode of a conv/pool window."""

    kernel_h: int
    kernel_w: int
    stride: int = 1
    padding: str = "same"

    def __post_init__(self):
        if self.kernel_h < 1 or self.kernel_w < 1:
            raise ContractError(f"kernel extents must be >= 1, got {self.kernel_h}x{self.kernel_w}")
        if self.stride < 1:
            raise ContractError(f"stride must be >= 1, got {self.stride}")
        if self.padding not in PADDINGS:
            raise ContractError(f"padding must be one of {PADDINGS}, got {self.padding!r}")

    def out_extent(self, size: int, kernel: int) -> int:
        if self.padding == "same":
            return -(-size // self.stride)
        if size < kernel:
            raise ShapeError(
                f"valid padding needs input extent >= kernel ({size} < {kernel})")
        return (size - kernel) // self.stride + 1

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        return self.out_extent(h, self.kernel_h), self.out_extent(w, self.kernel_w)

    def pads(self, h: int, w: int) -> tuple[int, int]:
        """Top and left zero-padding (bottom/right take the odd remainder)."""
        if self.padding == "valid":
            return 0, 0
        oh, ow = self.out_hw(h, w)
        total_h = max((oh - 1) * self.stride + self.kernel_h - h, 0)
        total_w = max((ow - 1) * self.stride + self.kernel_w - w, 0)
        return total_h // 2, total_w // 2


# ---------------------------------------------------------------------------
# conv2d


def conv2d_fwd(x: np.ndarray, weights: np.ndarray, bias: np.ndarray | None,
               geom: ConvGeometry, accumulate_fp64: bool = False):
    n, h, w, cin = x.shape
    kh, kw, wcin, f = weights.shape
    if (kh, kw) != (geom.kernel_h, geom.kernel_w):
        raise ShapeError(f"weight kernel {kh}x{kw} does not match geometry "
                         f"{geom.kernel_h}x{geom.kernel_w}")
    if wcin != cin:
        raise ShapeError(f"conv2d channel mismatch: input {tuple(x.shape)} vs "
                         f"weights {tuple(weights.shape)}")
    oh, ow = geom.out_hw(h, w)
    pt, pl = geom.pads(h, w)
    one_by_one = kh == 1 and kw == 1 and geom.stride == 1 and pt == 0 and pl == 0
    if one_by_one:
        cols = x.reshape(n * h * w, cin)
    else:
        cols = backend.kernels(x.dtype).im2col(x, kh, kw, geom.stride, pt, pl, oh, ow)
    wmat = weights.reshape(kh * kw * cin, f)
    with np.errstate(over="ignore", invalid="ignore"):  # overflow raises below
        if accumulate_fp64 and x.dtype == np.float32:
            y = (cols.astype(np.float64) @ wmat.astype(np.float64)).astype(np.float32)
        else:
            y = cols @ wmat
        if bias is not None:
            y = y + bias
    y = y.reshape(n, oh, ow, f)
    check_finite(y, "conv2d output")
    cache = (x.shape, cols, weights, geom, pt, pl, oh, ow, one_by_one, bias is not None)
    return y, cache


def _need_cache(cache, what: str):
    if cache is None:
        raise ContractError(f"{what} backward called before forward (no cache)")
    return cache


def conv2d_bwd(dy: np.ndarray, cache):
    x_shape, cols, weights, geom, pt, pl, oh, ow, one_by_one, has_bias = \
        _need_cache(cache, "conv2d")
    n, h, w, cin = x_shape
    kh, kw, _, f = weights.shape
    dy_mat = dy.reshape(-1, f)
    dw = (cols.T @ dy_mat).reshape(weights.shape)
    db = dy_mat.sum(axis=0) if has_bias else None
    dcols = dy_mat @ weights.reshape(kh * kw * cin, f).T
    if one_by_one:
        dx = dcols.reshape(x_shape)
    else:
        dx = backend.kernels(dy.dtype).col2im(
            dcols, n, h, w, cin, kh, kw, geom.stride, pt, pl, oh, ow)
    return dx, dw, db


def conv2d(x, weights, bias, geom: ConvGeometry, accumulate_fp64: bool = False):
    """Cross-correlate ``x`` [N,H,W,Cin] with ``weights`` [kh,kw,Cin,F]."""
    require_rank(x, 4, "conv2d input")
    require_rank(weights, 4, "conv2d weights")
    require_float(x, "conv2d input")
    if bias is not None and bias.shape != (weights.shape[3],):
        raise ShapeError(f"bias shape {tuple(bias.shape)} does not match "
                         f"filter count {weights.shape[3]}")
    check_finite(x, "conv2d input")
    y, _ = conv2d_fwd(x, weights, bias, geom, accumulate_fp64)
    return y


# ---------------------------------------------------------------------------
# pooling


def _pool_geom(x, window, stride, padding):
    require_rank(x, 4, "pool input")
    if window < 1 or stride < 1:
        raise ContractError(f"pool window/stride must be >= 1, got {window}/{stride}")
    geom = ConvGeometry(window, window, stride, padding)
    n, h, w, c = x.shape
    oh, ow = geom.out_hw(h, w)
    pt, pl = geom.pads(h, w)
    return n, h, w, c, oh, ow, pt, pl


def max_pool_fwd(x, window: int, stride: int, padding: str = "valid"):
    n, h, w, c, oh, ow, pt, pl = _pool_geom(x, window, stride, padding)
    y, arg = backend.kernels(x.dtype).maxpool_fwd(x, window, stride, pt, pl, oh, ow)
    return y, (arg, h, w)


def max_pool_bwd(dy, cache):
    arg, h, w = _need_cache(cache, "max_pool")
    return backend.kernels(dy.dtype).maxpool_bwd(dy, arg, h, w)


def max_pool(x, window: int, stride: int, padding: str = "valid"):
    """Window maximum; gradient routes to the argmax position only."""
    y, _ = max_pool_fwd(x, window, stride, padding)
    return y


def avg_pool_fwd(x, window: int, stride: int, padding: str = "same"):
    n, h, w, c, oh, ow, pt, pl = _pool_geom(x, window, stride, padding)
    y = backend.kernels(x.dtype).avgpool_fwd(x, window, stride, pt, pl, oh, ow)
    return y, (h, w, window, stride, pt, pl)


def avg_pool_bwd(dy, cache):
    h, w, window, stride, pt, pl = _need_cache(cache, "avg_pool")
    return backend.kernels(dy.dtype).avgpool_bwd(dy, h, w, window, stride, pt, pl)


def avg_pool(x, window: int, stride: int, padding: str = "same"):
    """Window mean over valid positions (padding excluded from the divisor)."""
    y, _ = avg_pool_fwd(x, window, stride, padding)
    return y


def global_max_pool_fwd(x):
    require_rank(x, 4, "global_max_pool input")
    n, h, w, c = x.shape
    flat = x.reshape(n, h * w, c)
    arg = flat.argmax(axis=1)
    y = np.take_along_axis(flat, arg[:, None, :], axis=1)[:, 0, :]
    return y, (arg, x.shape)


def global_max_pool_bwd(dy, cache):
    arg, x_shape = cache
    n, h, w, c = x_shape
    dx = np.zeros((n, h * w, c), dtype=dy.dtype)
    np.put_along_axis(dx, arg[:, None, :], dy[:, None, :], axis=1)
    return dx.reshape(x_shape)


def global_max_pool(x):
    """Per-channel maximum over all spatial positions: [N,H,W,C] -> [N,C]."""
    y, _ = global_max_pool_fwd(x)
    return y


# ---------------------------------------------------------------------------
# concat / relu


def concat_channels_fwd(inputs):
    if len(inputs) < 2:
        raise ContractError(f"concat_channels needs >= 2 inputs, got {len(inputs)}")
    ref = inputs[0].shape
    for i, t in enumerate(inputs):
        require_rank(t, 4, f"concat branch {i}")
        if t.shape[:3] != ref[:3]:
            raise ShapeError(
                f"concat branch {i} has batch/spatial {tuple(t.shape[:3])}, "
                f"expected {tuple(ref[:3])}")
    y = np.concatenate(inputs, axis=3)
    return y, [t.shape[3] for t in inputs]


def concat_channels_bwd(dy, channel_counts):
    grads, off = [], 0
    for c in channel_counts:
        grads.append(np.ascontiguousarray(dy[:, :, :, off:off + c]))
        off += c
    return grads


def concat_channels(inputs):
    """Stack branch outputs along channels, preserving branch order."""
    y, _ = concat_channels_fwd(inputs)
    return y


def relu_fwd(x):
    y = np.maximum(x, 0)
    return y, x > 0


def relu_bwd(dy, mask):
    return dy * mask
