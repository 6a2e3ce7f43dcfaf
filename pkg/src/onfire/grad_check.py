"""Finite-difference gradient verification harness.

Central differences with step ``h`` against analytic gradients, compared as
``|a - fd| <= atol + rtol * max(|a|, |fd|)``.  Default tolerances follow
the package's precision contract: rtol 1e-2 at float32, 1e-4 at float64.
The probe-sum loss is accumulated in float64 so quantization noise of the
op's float32 output stays below the tolerance floor.
"""

from __future__ import annotations

import numpy as np

H_DEFAULT = 1e-3


def tolerances(dtype) -> tuple[float, float]:
    """(rtol, atol) for a given dtype."""
    if np.dtype(dtype) == np.float64:
        return 1e-4, 1e-8
    return 1e-2, 1e-4


def probe_loss(out: np.ndarray, probe: np.ndarray) -> float:
    return float(np.sum(out.astype(np.float64) * probe.astype(np.float64)))


def finite_difference(f, x: np.ndarray, h: float = H_DEFAULT) -> np.ndarray:
    """Dense central-difference gradient of scalar ``f`` w.r.t. every
    element of ``x`` (intended for small tensors)."""
    grad = np.zeros(x.shape, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_mismatch(analytic: np.ndarray, fd: np.ndarray,
                 rtol: float, atol: float) -> float:
    """Largest violation ratio of the mixed tolerance; <= 1 means pass."""
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(fd, dtype=np.float64)
    denom = atol + rtol * np.maximum(np.abs(a), np.abs(b))
    return float((np.abs(a - b) / denom).max())


def _noise_floor(f0: float, dtype, h: float) -> float:
    # Central differences divide the loss's own rounding error by 2h; the
    # comparison floor must absorb that quantization noise.
    return 4.0 * np.finfo(dtype).eps * abs(f0) / (2.0 * h)


def check_gradient(f, x: np.ndarray, analytic: np.ndarray,
                   h: float = H_DEFAULT, rtol: float | None = None,
                   atol: float | None = None) -> float:
    """Compare a dense analytic gradient against central differences.

    ``f`` is a zero-argument callable returning the scalar loss computed
    from the current contents of ``x`` (which is perturbed in place).
    Returns the mismatch ratio; callers assert ``<= 1``.
    """
    if rtol is None or atol is None:
        d_rtol, d_atol = tolerances(x.dtype)
        rtol = d_rtol if rtol is None else rtol
        atol = d_atol if atol is None else atol
    atol = max(atol, _noise_floor(f(), x.dtype, h))
    fd = finite_difference(f, x, h)
    return max_mismatch(analytic, fd, rtol, atol)


def check_gradient_probes(f, x: np.ndarray, analytic: np.ndarray,
                          n_probes: int, rng: np.random.Generator,
                          h: float = H_DEFAULT, rtol: float | None = None,
                          atol: float | None = None) -> float:
    """Like :func:`check_gradient` but only at ``n_probes`` random indices;
    used for whole-network checks where a dense sweep is too slow."""
    if rtol is None or atol is None:
        d_rtol, d_atol = tolerances(x.dtype)
        rtol = d_rtol if rtol is None else rtol
        atol = d_atol if atol is None else atol
    atol = max(atol, _noise_floor(f(), x.dtype, h))
    flat = x.reshape(-1)
    aflat = np.asarray(analytic).reshape(-1)
    idx = rng.choice(flat.size, size=min(n_probes, flat.size), replace=False)
    worst = 0.0
    for i in idx:
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        fd = (fp - fm) / (2.0 * h)
        worst = max(worst, max_mismatch(np.array([aflat[i]]), np.array([fd]), rtol, atol))
    return worst
