# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels (float32 conv/pool plumbing, float64 SLIC sweep).

Twin of ``onfire.kernels_np``: same signatures and, deliberately, the same
floating point accumulation order, so the two backends are bit-identical on
the same inputs.  Zero contributions from padded positions are added
explicitly in the average pool to mirror the numpy path's padded adds.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "compiled"


def im2col(cnp.ndarray x_arr, int kh, int kw, int stride,
           int pad_t, int pad_l, int out_h, int out_w):
    cdef float[:, :, :, ::1] x = np.ascontiguousarray(x_arr, dtype=np.float32)
    cdef int n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cols_arr = np.zeros((n * out_h * out_w, kh * kw * c), dtype=np.float32)
    cdef float[:, ::1] cols = cols_arr
    cdef int b, oh, ow, i, j, ch, r, cc
    cdef Py_ssize_t row, base
    for b in range(n):
        for oh in range(out_h):
            for ow in range(out_w):
                row = (<Py_ssize_t>b * out_h + oh) * out_w + ow
                for i in range(kh):
                    r = oh * stride - pad_t + i
                    for j in range(kw):
                        cc = ow * stride - pad_l + j
                        base = (<Py_ssize_t>i * kw + j) * c
                        if 0 <= r < h and 0 <= cc < w:
                            for ch in range(c):
                                cols[row, base + ch] = x[b, r, cc, ch]
    return cols_arr


def col2im(cnp.ndarray cols_arr, int n, int h, int w, int c,
           int kh, int kw, int stride, int pad_t, int pad_l,
           int out_h, int out_w):
    cdef float[:, ::1] cols = np.ascontiguousarray(cols_arr, dtype=np.float32)
    dx_arr = np.zeros((n, h, w, c), dtype=np.float32)
    cdef float[:, :, :, ::1] dx = dx_arr
    cdef int b, oh, ow, i, j, ch, r, cc
    cdef Py_ssize_t row, base
    # Offset-major (i, j) outer loops replicate the fallback's per-offset
    # slice adds, keeping per-cell accumulation order identical.
    for i in range(kh):
        for j in range(kw):
            base = (<Py_ssize_t>i * kw + j) * c
            for b in range(n):
                for oh in range(out_h):
                    r = oh * stride - pad_t + i
                    if r < 0 or r >= h:
                        continue
                    for ow in range(out_w):
                        cc = ow * stride - pad_l + j
                        if cc < 0 or cc >= w:
                            continue
                        row = (<Py_ssize_t>b * out_h + oh) * out_w + ow
                        for ch in range(c):
                            dx[b, r, cc, ch] += cols[row, base + ch]
    return dx_arr


def maxpool_fwd(cnp.ndarray x_arr, int window, int stride,
                int pad_t, int pad_l, int out_h, int out_w):
    cdef float[:, :, :, ::1] x = np.ascontiguousarray(x_arr, dtype=np.float32)
    cdef int n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef float neg = np.finfo(np.float32).min
    y_arr = np.full((n, out_h, out_w, c), neg, dtype=np.float32)
    arg_arr = np.zeros((n, out_h, out_w, c), dtype=np.int64)
    cdef float[:, :, :, ::1] y = y_arr
    cdef cnp.int64_t[:, :, :, ::1] arg = arg_arr
    cdef int b, oh, ow, i, j, ch, r, cc
    cdef float v
    for b in range(n):
        for oh in range(out_h):
            for ow in range(out_w):
                for i in range(window):
                    r = oh * stride - pad_t + i
                    if r < 0 or r >= h:
                        continue
                    for j in range(window):
                        cc = ow * stride - pad_l + j
                        if cc < 0 or cc >= w:
                            continue
                        for ch in range(c):
                            v = x[b, r, cc, ch]
                            if v > y[b, oh, ow, ch]:
                                y[b, oh, ow, ch] = v
                                arg[b, oh, ow, ch] = <cnp.int64_t>r * w + cc
    return y_arr, arg_arr


def maxpool_bwd(cnp.ndarray dy_arr, cnp.ndarray arg_arr, int h, int w):
    cdef float[:, :, :, ::1] dy = np.ascontiguousarray(dy_arr, dtype=np.float32)
    cdef cnp.int64_t[:, :, :, ::1] arg = np.ascontiguousarray(arg_arr)
    cdef int n = dy.shape[0], out_h = dy.shape[1], out_w = dy.shape[2], c = dy.shape[3]
    dx_arr = np.zeros((n, h, w, c), dtype=np.float32)
    cdef float[:, :, :, ::1] dx = dx_arr
    cdef int b, oh, ow, ch
    cdef cnp.int64_t flat
    for b in range(n):
        for oh in range(out_h):
            for ow in range(out_w):
                for ch in range(c):
                    flat = arg[b, oh, ow, ch]
                    dx[b, <int>(flat // w), <int>(flat % w), ch] += dy[b, oh, ow, ch]
    return dx_arr


cdef inline int _count1d(int o, int stride, int pad, int window, int extent) nogil:
    cdef int lo = o * stride - pad
    cdef int hi = lo + window
    if lo < 0:
        lo = 0
    if hi > extent:
        hi = extent
    return hi - lo


def avgpool_fwd(cnp.ndarray x_arr, int window, int stride,
                int pad_t, int pad_l, int out_h, int out_w):
    cdef float[:, :, :, ::1] x = np.ascontiguousarray(x_arr, dtype=np.float32)
    cdef int n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    y_arr = np.zeros((n, out_h, out_w, c), dtype=np.float32)
    cdef float[:, :, :, ::1] y = y_arr
    cdef int b, oh, ow, i, j, ch, r, cc
    cdef float acc, cnt
    for b in range(n):
        for oh in range(out_h):
            for ow in range(out_w):
                cnt = <float>(_count1d(oh, stride, pad_t, window, h)
                              * _count1d(ow, stride, pad_l, window, w))
                for ch in range(c):
                    acc = 0.0
                    for i in range(window):
                        r = oh * stride - pad_t + i
                        for j in range(window):
                            cc = ow * stride - pad_l + j
                            if 0 <= r < h and 0 <= cc < w:
                                acc = acc + x[b, r, cc, ch]
                            else:
                                acc = acc + 0.0
                    y[b, oh, ow, ch] = acc / cnt
    return y_arr


def avgpool_bwd(cnp.ndarray dy_arr, int h, int w, int window, int stride,
                int pad_t, int pad_l):
    cdef float[:, :, :, ::1] dy = np.ascontiguousarray(dy_arr, dtype=np.float32)
    cdef int n = dy.shape[0], out_h = dy.shape[1], out_w = dy.shape[2], c = dy.shape[3]
    dx_arr = np.zeros((n, h, w, c), dtype=np.float32)
    cdef float[:, :, :, ::1] dx = dx_arr
    g_arr = np.zeros((n, out_h, out_w, c), dtype=np.float32)
    cdef float[:, :, :, ::1] g = g_arr
    cdef int b, oh, ow, i, j, ch, r, cc
    cdef float cnt
    for b in range(n):
        for oh in range(out_h):
            for ow in range(out_w):
                cnt = <float>(_count1d(oh, stride, pad_t, window, h)
                              * _count1d(ow, stride, pad_l, window, w))
                for ch in range(c):
                    g[b, oh, ow, ch] = dy[b, oh, ow, ch] / cnt
    for i in range(window):
        for j in range(window):
            for b in range(n):
                for oh in range(out_h):
                    r = oh * stride - pad_t + i
                    if r < 0 or r >= h:
                        continue
                    for ow in range(out_w):
                        cc = ow * stride - pad_l + j
                        if cc < 0 or cc >= w:
                            continue
                        for ch in range(c):
                            dx[b, r, cc, ch] += g[b, oh, ow, ch]
    return dx_arr


def slic_assign(cnp.ndarray lab_arr, cnp.ndarray centers_arr, int search,
                double spatial_w, cnp.ndarray labels_arr, cnp.ndarray dist2_arr):
    cdef double[:, :, ::1] lab = np.ascontiguousarray(lab_arr, dtype=np.float64)
    cdef double[:, ::1] centers = np.ascontiguousarray(centers_arr, dtype=np.float64)
    cdef cnp.int32_t[:, ::1] labels = labels_arr
    cdef double[:, ::1] dist2 = dist2_arr
    cdef int h = lab.shape[0], w = lab.shape[1], k = centers.shape[0]
    cdef int ki, y, x, y0, y1, x0, x1
    cdef double cl, ca, cb, cy, cx, dl, da, db, dyv, dxv, d2
    for ki in range(k):
        cl = centers[ki, 0]
        ca = centers[ki, 1]
        cb = centers[ki, 2]
        cy = centers[ki, 3]
        cx = centers[ki, 4]
        y0 = <int>cy - search
        if y0 < 0:
            y0 = 0
        y1 = <int>cy + search + 1
        if y1 > h:
            y1 = h
        x0 = <int>cx - search
        if x0 < 0:
            x0 = 0
        x1 = <int>cx + search + 1
        if x1 > w:
            x1 = w
        for y in range(y0, y1):
            dyv = y - cy
            for x in range(x0, x1):
                dl = lab[y, x, 0] - cl
                da = lab[y, x, 1] - ca
                db = lab[y, x, 2] - cb
                dxv = x - cx
                d2 = ((dl * dl + da * da) + db * db) + ((dyv * dyv + dxv * dxv) * spatial_w)
                if d2 < dist2[y, x]:
                    dist2[y, x] = d2
                    labels[y, x] = ki
