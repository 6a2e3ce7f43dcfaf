"""Pure-numpy implementations of the hot kernels.

These are the fallback twins of the compiled ``_fastops`` extension.  Both
backends implement the same signatures and, deliberately, the same floating
point accumulation order, so outputs are bit-identical whichever one is
selected at import time.

Layout conventions: activations are NHWC, convolution patch matrices are
``[N * out_h * out_w, kh * kw * C]`` with the patch axis ordered
``(kh, kw, C)`` row-major.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def im2col(x: np.ndarray, kh: int, kw: int, stride: int,
           pad_t: int, pad_l: int, out_h: int, out_w: int) -> np.ndarray:
    """Gather sliding windows of ``x`` into a patch matrix (zero padded)."""
    n, h, w, c = x.shape
    pad_b = max(0, (out_h - 1) * stride + kh - h - pad_t)
    pad_r = max(0, (out_w - 1) * stride + kw - w - pad_l)
    if pad_t or pad_b or pad_l or pad_r:
        xp = np.pad(x, ((0, 0), (pad_t, pad_b), (pad_l, pad_r), (0, 0)))
    else:
        xp = x
    cols = np.empty((n, out_h, out_w, kh, kw, c), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j, :] = xp[:, i:i + out_h * stride:stride,
                                        j:j + out_w * stride:stride, :]
    return cols.reshape(n * out_h * out_w, kh * kw * c)


def col2im(cols: np.ndarray, n: int, h: int, w: int, c: int,
           kh: int, kw: int, stride: int,
           pad_t: int, pad_l: int, out_h: int, out_w: int) -> np.ndarray:
    """Scatter-add a patch matrix back onto the input grid (im2col adjoint)."""
    pad_b = max(0, (out_h - 1) * stride + kh - h - pad_t)
    pad_r = max(0, (out_w - 1) * stride + kw - w - pad_l)
    xp = np.zeros((n, h + pad_t + pad_b, w + pad_l + pad_r, c), dtype=cols.dtype)
    patches = cols.reshape(n, out_h, out_w, kh, kw, c)
    # Offset-major accumulation order; the compiled kernel mirrors it.
    for i in range(kh):
        for j in range(kw):
            xp[:, i:i + out_h * stride:stride,
               j:j + out_w * stride:stride, :] += patches[:, :, :, i, j, :]
    if pad_t or pad_b or pad_l or pad_r:
        return np.ascontiguousarray(xp[:, pad_t:pad_t + h, pad_l:pad_l + w, :])
    return xp


def maxpool_fwd(x: np.ndarray, window: int, stride: int,
                pad_t: int, pad_l: int, out_h: int, out_w: int):
    """Window maximum.  Returns the pooled map and flat ``r*W + c`` argmax
    positions in original (unpadded) coordinates; ties keep the first
    window position in (row, col) scan order."""
    n, h, w, c = x.shape
    neg = np.finfo(x.dtype).min
    best = np.full((n, out_h, out_w, c), neg, dtype=x.dtype)
    arg = np.zeros((n, out_h, out_w, c), dtype=np.int64)
    rows = np.arange(out_h) * stride - pad_t
    colx = np.arange(out_w) * stride - pad_l
    for i in range(window):
        r = rows + i
        rv = (r >= 0) & (r < h)
        for j in range(window):
            cc = colx + j
            cv = (cc >= 0) & (cc < w)
            if not rv.any() or not cv.any():
                continue
            patch = np.full((n, out_h, out_w, c), neg, dtype=x.dtype)
            patch[:, rv[:, None] & cv[None, :], :] = \
                x[:, r[rv][:, None], cc[cv][None, :], :].reshape(n, -1, c)
            flat = (r[:, None] * w + cc[None, :]).astype(np.int64)
            better = patch > best
            best = np.where(better, patch, best)
            arg = np.where(better, flat[None, :, :, None], arg)
    return best, arg


def maxpool_bwd(dy: np.ndarray, arg: np.ndarray, h: int, w: int) -> np.ndarray:
    n, out_h, out_w, c = dy.shape
    dx = np.zeros((n, h * w, c), dtype=dy.dtype)
    ni = np.repeat(np.arange(n), out_h * out_w * c)
    ci = np.tile(np.arange(c), n * out_h * out_w)
    np.add.at(dx, (ni, arg.ravel(), ci), dy.ravel())
    return dx.reshape(n, h, w, c)


def _pool_counts(h, w, window, stride, pad_t, pad_l, out_h, out_w):
    r0 = np.arange(out_h) * stride - pad_t
    c0 = np.arange(out_w) * stride - pad_l
    ch = np.minimum(r0 + window, h) - np.maximum(r0, 0)
    cw = np.minimum(c0 + window, w) - np.maximum(c0, 0)
    return (ch[:, None] * cw[None, :]).astype(np.int64)


def avgpool_fwd(x: np.ndarray, window: int, stride: int,
                pad_t: int, pad_l: int, out_h: int, out_w: int) -> np.ndarray:
    """Window mean over valid (non padded) positions only."""
    n, h, w, c = x.shape
    pad_b = max(0, (out_h - 1) * stride + window - h - pad_t)
    pad_r = max(0, (out_w - 1) * stride + window - w - pad_l)
    xp = np.pad(x, ((0, 0), (pad_t, pad_b), (pad_l, pad_r), (0, 0)))
    acc = np.zeros((n, out_h, out_w, c), dtype=x.dtype)
    for i in range(window):
        for j in range(window):
            acc += xp[:, i:i + out_h * stride:stride, j:j + out_w * stride:stride, :]
    counts = _pool_counts(h, w, window, stride, pad_t, pad_l, out_h, out_w)
    return acc / counts[None, :, :, None].astype(x.dtype)


def avgpool_bwd(dy: np.ndarray, h: int, w: int, window: int, stride: int,
                pad_t: int, pad_l: int) -> np.ndarray:
    n, out_h, out_w, c = dy.shape
    counts = _pool_counts(h, w, window, stride, pad_t, pad_l, out_h, out_w)
    g = dy / counts[None, :, :, None].astype(dy.dtype)
    pad_b = max(0, (out_h - 1) * stride + window - h - pad_t)
    pad_r = max(0, (out_w - 1) * stride + window - w - pad_l)
    dxp = np.zeros((n, h + pad_t + pad_b, w + pad_l + pad_r, c), dtype=dy.dtype)
    for i in range(window):
        for j in range(window):
            dxp[:, i:i + out_h * stride:stride, j:j + out_w * stride:stride, :] += g
    return np.ascontiguousarray(dxp[:, pad_t:pad_t + h, pad_l:pad_l + w, :])


def slic_assign(lab: np.ndarray, centers: np.ndarray, search: int,
                spatial_w: float, labels: np.ndarray, dist2: np.ndarray) -> None:
    """One SLIC assignment sweep.

    ``centers`` rows are ``(l, a, b, y, x)`` float64; each cluster claims
    pixels within a ``2S`` window when its squared distance
    ``(dl^2 + da^2) + db^2 + (dy^2 + dx^2) * spatial_w`` is strictly lower
    than the best seen, so ties keep the lowest cluster id.  ``labels`` and
    ``dist2`` are updated in place.
    """
    h, w, _ = lab.shape
    for k in range(centers.shape[0]):
        cl, ca, cb, cy, cx = centers[k]
        y0 = max(int(cy) - search, 0)
        y1 = min(int(cy) + search + 1, h)
        x0 = max(int(cx) - search, 0)
        x1 = min(int(cx) + search + 1, w)
        if y0 >= y1 or x0 >= x1:
            continue
        sub = lab[y0:y1, x0:x1]
        dl = sub[:, :, 0] - cl
        da = sub[:, :, 1] - ca
        db = sub[:, :, 2] - cb
        yy = np.arange(y0, y1, dtype=np.float64)[:, None] - cy
        xx = np.arange(x0, x1, dtype=np.float64)[None, :] - cx
        d2 = ((dl * dl + da * da) + db * db) + ((yy * yy + xx * xx) * spatial_w)
        region = dist2[y0:y1, x0:x1]
        better = d2 < region
        region[better] = d2[better]
        labels[y0:y1, x0:x1][better] = k
