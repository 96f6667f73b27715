"""Equirectangular environment maps (row 0 is the zenith, +z up)."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(eq=False)
class EnvironmentMap:
    radiance: np.ndarray   # (height, width, 3) linear RGB

    def __post_init__(self):
        r = np.asarray(self.radiance, dtype=np.float64)
        if r.ndim != 3 or r.shape[2] != 3:
            raise ValueError(f"radiance grid must be (height, width, 3), got {r.shape}")
        if not np.all(np.isfinite(r)) or np.any(r < 0):
            raise ValueError("environment radiance must be finite and non-negative")
        self.radiance = r

    @property
    def height(self) -> int:
        return self.radiance.shape[0]

    @property
    def width(self) -> int:
        return self.radiance.shape[1]

    @cached_property
    def angles(self) -> tuple[np.ndarray, np.ndarray]:
        """Texel-centre polar angle (per row) and azimuth (per column)."""
        theta = (np.arange(self.height) + 0.5) * np.pi / self.height
        phi = (np.arange(self.width) + 0.5) * 2 * np.pi / self.width
        return theta, phi

    @cached_property
    def directions(self) -> np.ndarray:
        """(height*width, 3) unit directions, row-major over the grid."""
        theta, phi = self.angles
        st, ct = np.sin(theta)[:, None], np.cos(theta)[:, None]
        d = np.stack([st * np.cos(phi)[None, :], st * np.sin(phi)[None, :],
                      np.broadcast_to(ct, (self.height, self.width))], axis=-1)
        return d.reshape(-1, 3)

    @cached_property
    def solid_angles(self) -> np.ndarray:
        """(height*width,) texel solid angles sin(theta) dtheta dphi."""
        theta, _ = self.angles
        dtheta = np.pi / self.height
        dphi = 2 * np.pi / self.width
        return np.repeat(np.sin(theta) * dtheta * dphi, self.width)

    @property
    def texels(self) -> np.ndarray:
        return self.radiance.reshape(-1, 3)

    def scaled(self, factor: float) -> "EnvironmentMap":
        return EnvironmentMap(self.radiance * factor)


def constant_env(value=1.0, width: int = 64, height: int = 32) -> EnvironmentMap:
    rad = np.empty((height, width, 3))
    rad[...] = value
    return EnvironmentMap(rad)


def direction_to_texel(direction, width: int, height: int) -> tuple[int, int]:
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    theta = np.arccos(np.clip(d[2], -1, 1))
    phi = np.arctan2(d[1], d[0]) % (2 * np.pi)
    row = min(int(theta / np.pi * height), height - 1)
    col = min(int(phi / (2 * np.pi) * width), width - 1)
    return row, col


def generate_env(rng: np.random.Generator, width: int = 64, height: int = 32,
                 n_lobes: int = 3, ambient=None, peak_range=(2.0, 12.0),
                 width_range=(0.1, 0.35)) -> EnvironmentMap:
    """Procedural light probe: ambient term plus Gaussian lobes.

    Each lobe has angular falloff ``exp(-angle**2 / (2 * sigma**2))`` around a
    random direction (biased toward the sky), a random peak in ``peak_range``
    and a random near-white tint.  ``ambient`` may be a scalar, an RGB triple,
    or ``None`` to draw a dim random sky colour.
    """
    if n_lobes < 0:
        raise ValueError(f"n_lobes must be non-negative, got {n_lobes}")
    if ambient is None:
        ambient = rng.uniform(0.05, 0.25) * rng.uniform(0.7, 1.0, size=3)
    rad = np.empty((height, width, 3))
    rad[...] = np.asarray(ambient, dtype=float)
    probe = EnvironmentMap(rad.copy())
    dirs = probe.directions
    for _ in range(n_lobes):
        z = rng.uniform(-0.2, 1.0)
        phi = rng.uniform(0, 2 * np.pi)
        r = np.sqrt(1 - z * z)
        centre = np.array([r * np.cos(phi), r * np.sin(phi), z])
        sigma = rng.uniform(*width_range)
        peak = rng.uniform(*peak_range)
        tint = rng.uniform(0.75, 1.0, size=3)
        tint /= tint.max()
        angle = np.arccos(np.clip(dirs @ centre, -1.0, 1.0))
        lobe = np.exp(-angle ** 2 / (2 * sigma ** 2)).reshape(height, width)
        rad += peak * lobe[..., None] * tint
    return EnvironmentMap(rad)
