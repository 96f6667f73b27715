"""Radical-inverse (Halton) points and hemisphere viewpoints."""
from __future__ import annotations

import math

import numpy as np


def halton(index: int, base: int) -> float:
    """Radical inverse of ``index`` in ``base``: digits mirrored about the point."""
    if index < 1:
        raise ValueError(f"halton index must be >= 1, got {index}")
    if base < 2:
        raise ValueError(f"halton base must be >= 2, got {base}")
    result, f = 0.0, 1.0
    i = index
    while i > 0:
        f /= base
        i, digit = divmod(i, base)
        result += f * digit
    return result


def halton_sequence(n: int, base: int, start: int = 1) -> np.ndarray:
    return np.array([halton(i, base) for i in range(start, start + n)])


def sample_viewpoint(index: int) -> np.ndarray:
    """Unit vector on the upper hemisphere, uniform in area.

    ``z = halton(i, 2)`` is uniform on [0, 1), which is area-uniform on the
    hemisphere; the azimuth comes from ``halton(i, 3)``.
    """
    z = halton(index, 2)
    phi = 2.0 * math.pi * halton(index, 3)
    r = math.sqrt(max(0.0, 1.0 - z * z))
    v = np.array([r * math.cos(phi), r * math.sin(phi), z])
    return v / np.linalg.norm(v)
