"""sRGB to CIELAB conversion (D65 white point).

Constants: the IEC 61966-2-1 sRGB linearization (threshold 0.04045, gamma
2.4), the sRGB-to-XYZ matrix for the D65 illuminant, and the D65 reference
white (0.95047, 1.0, 1.08883).
"""

from __future__ import annotations

import numpy as np

_SRGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_WHITE_D65 = np.array([0.95047, 1.0, 1.08883])
_DELTA = 6.0 / 29.0


def srgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """Convert an ``[..., 3]`` sRGB image (uint8 or float in [0,1]) to CIELAB."""
    c = np.asarray(rgb, dtype=np.float64)
    if c.shape[-1] != 3:
        raise ValueError(f"expected trailing RGB axis of 3, got shape {c.shape}")
    if rgb.dtype == np.uint8:
        c = c / 255.0
    lin = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _SRGB_TO_XYZ.T
    t = xyz / _WHITE_D65
    f = np.where(t > _DELTA ** 3, np.cbrt(t), t / (3.0 * _DELTA ** 2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab
