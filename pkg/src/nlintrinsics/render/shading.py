"""Diffuse and specular shading as Riemann sums over environment texels.

Both integrands keep the foreshortening ``max(0, N.w)``.  The diffuse lobe
is ``1/pi`` so a white surface under unit light shades to one; the glossy
lobe is the normalized modified Phong ``(n + 2) / (2 pi) cos^n`` about the
mirror direction.
"""
from __future__ import annotations

import numpy as np

from .envmap import EnvironmentMap

_CHUNK = 2048


def _as_rows(v) -> tuple[np.ndarray, bool]:
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    return np.atleast_2d(v), single


def shade_diffuse(normals, env: EnvironmentMap) -> np.ndarray:
    """RGB diffuse shading for one normal ``(3,)`` or many ``(P, 3)``."""
    n, single = _as_rows(normals)
    dirs, weights, radiance = env.directions, env.solid_angles, env.texels
    out = np.empty((n.shape[0], 3))
    for lo in range(0, n.shape[0], _CHUNK):
        cos = np.maximum(n[lo:lo + _CHUNK] @ dirs.T, 0.0)
        out[lo:lo + _CHUNK] = (cos * weights) @ radiance
    out /= np.pi
    return out[0] if single else out


def reflect(view, normals) -> np.ndarray:
    """Mirror ``view`` about each normal: ``2 (N.v) N - v``."""
    n, _ = _as_rows(normals)
    v = np.broadcast_to(np.asarray(view, dtype=np.float64), n.shape)
    ndv = np.sum(n * v, axis=1, keepdims=True)
    return 2 * ndv * n - v


def shade_specular(normals, view_dir, env: EnvironmentMap, exponent: float) -> np.ndarray:
    """RGB specular shading (before the specular albedo is applied).

    ``view_dir`` points from the surface toward the camera; it may be a
    single vector or one per normal.
    """
    n, single = _as_rows(normals)
    mirror = reflect(view_dir, n)
    dirs, weights, radiance = env.directions, env.solid_angles, env.texels
    norm = (exponent + 2.0) / (2.0 * np.pi)
    out = np.empty((n.shape[0], 3))
    for lo in range(0, n.shape[0], _CHUNK):
        cos_n = np.maximum(n[lo:lo + _CHUNK] @ dirs.T, 0.0)
        cos_r = np.maximum(mirror[lo:lo + _CHUNK] @ dirs.T, 0.0)
        lobe = cos_r ** exponent
        out[lo:lo + _CHUNK] = (lobe * cos_n * weights) @ radiance
    out *= norm
    return out[0] if single else out


def specular_contributions(normal, view_dir, env: EnvironmentMap, exponent: float) -> np.ndarray:
    """Per-texel terms of :func:`shade_specular` for one normal, shape (T, 3)."""
    n = np.asarray(normal, dtype=np.float64)
    mirror = reflect(view_dir, n)[0]
    dirs = env.directions
    lobe = np.maximum(dirs @ mirror, 0.0) ** exponent * np.maximum(dirs @ n, 0.0)
    return ((exponent + 2.0) / (2.0 * np.pi) * lobe * env.solid_angles)[:, None] * env.texels
