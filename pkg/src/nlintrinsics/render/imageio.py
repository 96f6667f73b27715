"""PFM for HDR layers, 8-bit PNG previews."""
from __future__ import annotations

import io
import os
import re

import numpy as np

from ..fileio import atomic_write_bytes


def pfm_bytes(image: np.ndarray) -> bytes:
    """Little-endian 3-channel PFM, rows stored bottom to top."""
    img = np.asarray(image)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"PFM writer expects (H, W, 3) or (H, W), got {img.shape}")
    h, w = img.shape[:2]
    data = np.ascontiguousarray(img[::-1].astype("<f4"))
    return f"PF\n{w} {h}\n-1.0\n".encode("ascii") + data.tobytes()


def write_pfm(path, image: np.ndarray) -> None:
    atomic_write_bytes(path, pfm_bytes(image))


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    return parse_pfm(blob)


def parse_pfm(blob: bytes) -> np.ndarray:
    m = re.match(rb"(PF|Pf)\s+(\d+)\s+(\d+)\s+(\S+)\s", blob)
    if m is None:
        raise ValueError("not a PFM file (bad header)")
    kind, w, h, scale = m.group(1), int(m.group(2)), int(m.group(3)), float(m.group(4))
    channels = 3 if kind == b"PF" else 1
    dtype = "<f4" if scale < 0 else ">f4"
    count = w * h * channels
    data = np.frombuffer(blob, dtype=dtype, count=count, offset=m.end())
    shape = (h, w, 3) if channels == 3 else (h, w)
    return data.reshape(shape)[::-1].astype(np.float32)


def tonemap(image: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1], gamma 1/2.2, quantize to uint8."""
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) ** (1 / 2.2)
    return np.round(img * 255).astype(np.uint8)


def png_bytes(image: np.ndarray) -> bytes:
    """Encode a PNG; uint8 input is written as-is, floats are tone-mapped."""
    from PIL import Image

    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        arr = tonemap(arr)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def write_png(path, image: np.ndarray) -> None:
    atomic_write_bytes(path, png_bytes(image))


def read_image(path) -> np.ndarray:
    """Load a PFM as-is or an 8-bit image as linear float (inverse gamma)."""
    if os.fspath(path).lower().endswith(".pfm"):
        return read_pfm(path)
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return (arr ** 2.2).astype(np.float32)


def montage(rows: list[list[np.ndarray]], pad: int = 2) -> np.ndarray:
    """Tile tone-mapped layers into a grid (white separators)."""
    tiles = [[tonemap(t) for t in row] for row in rows]
    h, w = tiles[0][0].shape[:2]
    ncols = max(len(r) for r in tiles)
    out = np.full((len(tiles) * (h + pad) + pad, ncols * (w + pad) + pad, 3), 255, np.uint8)
    for i, row in enumerate(tiles):
        for j, t in enumerate(row):
            y, x = pad + i * (h + pad), pad + j * (w + pad)
            out[y:y + h, x:x + w] = t
    return out
