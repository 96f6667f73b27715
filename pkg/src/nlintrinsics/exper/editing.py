"""Material editing on decomposed layers: recolor albedo, rescale and blur specular."""
from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from ..render.scene import IntrinsicTriple


def blur_layer(layer: np.ndarray, sigma: float) -> np.ndarray:
    """Per-channel Gaussian blur with zero padding; ``sigma = 0`` is the identity."""
    if sigma < 0:
        raise ValueError(f"blur sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return layer
    out = np.empty_like(layer)
    for c in range(layer.shape[2]):
        out[..., c] = gaussian_filter(layer[..., c], sigma, mode="constant", cval=0.0)
    return out


def edit_material(triple: IntrinsicTriple, albedo_tint=(1.0, 1.0, 1.0), spec_scale: float = 1.0,
                  spec_blur_sigma: float = 0.0) -> np.ndarray:
    """Recomposed image ``(tint * A) * S + scale * blur(R)`` on the mask.

    Pixels outside the mask keep their original values.
    """
    tint = np.asarray(albedo_tint, dtype=np.float32).reshape(-1)
    if tint.shape != (3,) or not np.all(np.isfinite(tint)) or np.any(tint < 0):
        raise ValueError(f"albedo_tint must be three non-negative numbers, got {albedo_tint!r}")
    if not np.isfinite(spec_scale) or spec_scale < 0:
        raise ValueError(f"spec_scale must be non-negative, got {spec_scale}")
    A = np.asarray(triple.albedo, dtype=np.float32)
    S = np.asarray(triple.shading, dtype=np.float32)
    R = np.asarray(triple.specular, dtype=np.float32)
    diffuse = (A * tint) * S
    if spec_scale == 0:
        edited = diffuse
    else:
        spec = blur_layer(R, spec_blur_sigma)
        edited = diffuse + (spec if spec_scale == 1 else np.float32(spec_scale) * spec)
    m = np.asarray(triple.mask).astype(bool)
    return np.where(m[..., None], edited, np.asarray(triple.image, dtype=np.float32))
