"""Input checks shared by the estimator and the command line."""
from __future__ import annotations

import numpy as np


def check_images(X, resolution: int | None = None, name: str = "X") -> np.ndarray:
    """Return a float32 ``(N, 3, H, W)`` batch.

    Accepts NCHW, NHWC, or a single CHW/HWC image.  A channel axis of 3 in
    position 1 is read as NCHW first.
    """
    a = np.asarray(X)
    if a.dtype == object or not np.issubdtype(a.dtype, np.number):
        raise TypeError(f"{name} must be numeric, got dtype {a.dtype}")
    if a.ndim == 3:
        a = a[None]
    if a.ndim != 4:
        raise ValueError(f"{name} must be 4-D (N, 3, H, W) or (N, H, W, 3), got shape {a.shape}")
    if a.shape[1] != 3 and a.shape[3] == 3:
        a = a.transpose(0, 3, 1, 2)
    if a.shape[1] != 3:
        raise ValueError(f"{name} must have 3 color channels, got shape {a.shape}")
    if a.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    a = np.ascontiguousarray(a, dtype=np.float32)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains NaN or infinite values")
    if resolution is not None and a.shape[2:] != (resolution, resolution):
        raise ValueError(f"{name} must be {resolution}x{resolution}, got {a.shape[2]}x{a.shape[3]}")
    return a


def check_mask(mask, n: int, size: tuple) -> np.ndarray:
    """Boolean ``(N, H, W)`` mask; ``None`` means every pixel counts."""
    if mask is None:
        return np.ones((n,) + tuple(size), dtype=bool)
    m = np.asarray(mask)
    if m.ndim == 2:
        m = np.broadcast_to(m, (n,) + m.shape)
    if m.shape != (n,) + tuple(size):
        raise ValueError(f"mask must have shape {(n,) + tuple(size)}, got {m.shape}")
    return np.ascontiguousarray(m.astype(bool))


def check_targets(y, images: np.ndarray) -> tuple:
    """Validate an ``(albedo, shading, specular)`` triple against the images."""
    if not isinstance(y, (tuple, list)) or len(y) != 3:
        raise ValueError("y must be an (albedo, shading, specular) triple")
    out = tuple(check_images(t, name=name) for t, name in zip(y, ("albedo", "shading", "specular")))
    for t, name in zip(out, ("albedo", "shading", "specular")):
        if t.shape != images.shape:
            raise ValueError(f"{name} shape {t.shape} does not match images {images.shape}")
    return out


def parse_floats(text: str, count: int | None = None, name: str = "value") -> tuple:
    try:
        vals = tuple(float(v) for v in str(text).split(","))
    except ValueError:
        raise ValueError(f"{name} must be comma-separated numbers, got {text!r}") from None
    if count is not None and len(vals) != count:
        raise ValueError(f"{name} needs {count} numbers, got {len(vals)}")
    return vals
