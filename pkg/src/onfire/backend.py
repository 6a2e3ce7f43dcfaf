"""Kernel backend selection.

The package ships two implementations of its hot loops: a compiled Cython
extension (``onfire._fastops``) and a pure-numpy fallback
(``onfire.kernels_np``).  The compiled core is preferred when it imported
successfully; set the environment variable ``ONFIRE_NO_EXT=1`` before import
(or call :func:`use`) to force the fallback.  float64 arrays always take the
numpy path; the extension is compiled for float32, the package's native
precision.
"""

from __future__ import annotations

import os

import numpy as np

from . import kernels_np

_fastops = None
if os.environ.get("ONFIRE_NO_EXT", "") not in ("1", "true", "yes"):
    try:
        from . import _fastops  # type: ignore[attr-defined]
    except ImportError:
        _fastops = None

_active = "compiled" if _fastops is not None else "numpy"


def extension_available() -> bool:
    return _fastops is not None


def available_backends() -> tuple[str, ...]:
    return ("compiled", "numpy") if _fastops is not None else ("numpy",)


def current() -> str:
    """Name of the backend the next float32 kernel call will use."""
    return _active


def use(name: str) -> None:
    """Select the kernel backend: ``compiled``, ``numpy`` or ``auto``."""
    global _active
    if name == "auto":
        _active = "compiled" if _fastops is not None else "numpy"
        return
    if name == "compiled" and _fastops is None:
        raise ValueError("compiled backend requested but onfire._fastops is not built")
    if name not in ("compiled", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    _active = name


def kernels(dtype=np.float32):
    """Kernel namespace to use for arrays of ``dtype``."""
    if _active == "compiled" and dtype == np.float32:
        return _fastops
    return kernels_np
