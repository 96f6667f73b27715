"""Evaluation metrics: scale-invariant MSE, LMSE and DSSIM, plus report tables.

Images here are ``(H, W, 3)`` arrays and masks ``(H, W)``.  Every metric reads
masked pixels only: inputs are multiplied by the mask before any windowed
statistic is formed.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import correlate1d

from . import loss as _loss

COMPONENTS = ("albedo", "shading", "specular")
METRIC_NAMES = {
    "albedo": ("si_mse", "lmse", "dssim"),
    "shading": ("si_mse", "lmse", "dssim"),
    "specular": ("mse", "lmse", "dssim"),
}
COLUMNS = tuple(f"{c}.{m}" for c in COMPONENTS for m in METRIC_NAMES[c])


@dataclass(frozen=True)
class SsimParams:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    def kernel(self) -> np.ndarray:
        r = self.window // 2
        x = np.arange(-r, r + 1, dtype=np.float64)
        g = np.exp(-x ** 2 / (2 * self.sigma ** 2))
        return g / g.sum()

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2


def _chw(img) -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got {a.shape}")
    return a.transpose(2, 0, 1)


def _check(pred, gt, mask):
    p, g = np.asarray(pred), np.asarray(gt)
    m = np.asarray(mask).astype(bool)
    if p.shape != g.shape or p.shape[:2] != m.shape:
        raise ValueError(f"shape mismatch: pred {p.shape}, gt {g.shape}, mask {m.shape}")
    return m


def si_mse(pred, gt, mask) -> float:
    """Scale-invariant MSE over the mask (one scale for all three channels)."""
    m = _check(pred, gt, mask)
    return float(_loss.smse(_chw(pred), _chw(gt), m.astype(np.float64)).data)


def masked_mse(pred, gt, mask) -> float:
    m = _check(pred, gt, mask)
    return float(_loss.weighted_mse(_chw(pred), _chw(gt), m.astype(np.float64)).data)


def lmse_window(size: int, window_frac: float = 0.125) -> int:
    return max(8, math.ceil(size * window_frac))


def lmse(pred, gt, mask, window_frac: float = 0.125, window: int | None = None,
         min_coverage: float = 0.25) -> float | None:
    """Mean of per-window scale-invariant MSE (half-window stride).

    Windows with less than ``min_coverage`` masked pixels are skipped; when
    none qualify the result is ``None``.
    """
    m = _check(pred, gt, mask)
    h, w = m.shape
    win = window or lmse_window(h, window_frac)
    if win < 8:
        raise ValueError(f"LMSE window must be at least 8 pixels, got {win}")
    step = max(win // 2, 1)
    P, G = _chw(pred), _chw(gt)
    total, count = 0.0, 0
    for i in range(0, h - win + 1, step):
        for j in range(0, w - win + 1, step):
            mw = m[i:i + win, j:j + win]
            if mw.mean() < min_coverage:
                continue
            total += float(_loss.smse(P[:, i:i + win, j:j + win], G[:, i:i + win, j:j + win],
                                      mw.astype(np.float64)).data)
            count += 1
    return total / count if count else None


def ssim_map(x: np.ndarray, y: np.ndarray, params: SsimParams = SsimParams()) -> np.ndarray:
    """Per-pixel SSIM of two single-channel images (reflect-padded Gaussian window)."""
    k = params.kernel()

    def blur(a):
        return correlate1d(correlate1d(a, k, axis=0, mode="reflect"), k, axis=1, mode="reflect")

    mx, my = blur(x), blur(y)
    sxx = blur(x * x) - mx * mx
    syy = blur(y * y) - my * my
    sxy = blur(x * y) - mx * my
    c1, c2 = params.c1, params.c2
    return ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))


def dssim(pred, gt, mask, params: SsimParams = SsimParams()) -> float:
    """Mean of ``(1 - SSIM) / 2`` over masked pixels and channels.

    Inputs are clamped to [0, 1] and zeroed outside the mask first.
    """
    m = _check(pred, gt, mask)
    if not m.any():
        raise ValueError("dssim needs a non-empty mask")
    P = np.clip(_chw(pred), 0, 1) * m
    G = np.clip(_chw(gt), 0, 1) * m
    vals = [((1 - ssim_map(P[c], G[c], params)) / 2)[m].mean() for c in range(3)]
    return float(np.mean(vals))


def evaluate_triple(pred, gt) -> dict | None:
    """Nine metric values for one sample, or ``None`` if its mask is empty.

    ``pred`` is an ``(albedo, shading, specular)`` triple of ``(H, W, 3)``
    arrays; ``gt`` an :class:`~nlintrinsics.render.IntrinsicTriple`.
    """
    m = np.asarray(gt.mask).astype(bool)
    if not m.any():
        return None
    A, S, R = pred
    row = {}
    for comp, p, g in (("albedo", A, gt.albedo), ("shading", S, gt.shading)):
        row[f"{comp}.si_mse"] = si_mse(p, g, m)
        row[f"{comp}.lmse"] = lmse(p, g, m)
        row[f"{comp}.dssim"] = dssim(p, g, m)
    row["specular.mse"] = masked_mse(R, gt.specular, m)
    row["specular.lmse"] = lmse(R, gt.specular, m)
    row["specular.dssim"] = dssim(R, gt.specular, m)
    return row


def baseline_prediction(image: np.ndarray) -> tuple:
    """Albedo = input image, shading = 1, specular = 0."""
    image = np.asarray(image, dtype=np.float32)
    return image.copy(), np.ones_like(image), np.zeros_like(image)


@dataclass
class MetricReport:
    rows: list = field(default_factory=list)        # dicts with "sample_id" plus COLUMNS
    excluded: list = field(default_factory=list)    # sample ids with an empty mask
    label: str = ""

    def add(self, sample_id: str, row: dict | None) -> None:
        if row is None:
            self.excluded.append(sample_id)
        else:
            self.rows.append(dict(sample_id=sample_id, **row))

    @property
    def n_samples(self) -> int:
        return len(self.rows)

    def aggregate(self) -> dict:
        out = {}
        for col in COLUMNS:
            vals = [r[col] for r in self.rows if r.get(col) is not None]
            out[col] = float(np.mean(vals)) if vals else None
        return out

    def __getitem__(self, column: str):
        return self.aggregate()[column]

    def to_dict(self) -> dict:
        return {"label": self.label, "n_samples": self.n_samples, "excluded": list(self.excluded),
                "aggregate": self.aggregate(), "rows": self.rows}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(rows=list(d["rows"]), excluded=list(d.get("excluded", [])),
                   label=d.get("label", ""))


def format_table(reports: dict) -> str:
    """Aligned text table: one row per labelled report, nine metric columns."""
    names = list(reports)
    width = max([len("model")] + [len(n) for n in names]) + 2
    head1 = "".ljust(width) + "".join(c.capitalize().ljust(30) for c in COMPONENTS)
    head2 = "model".ljust(width) + "".join(
        m.upper().replace("SI_", "").ljust(10) for c in COMPONENTS for m in METRIC_NAMES[c])
    lines = [head1.rstrip(), head2.rstrip()]
    for name in names:
        agg = reports[name].aggregate() if isinstance(reports[name], MetricReport) else reports[name]
        cells = ["-" if agg.get(col) is None else f"{agg[col]:.4f}" for col in COLUMNS]
        lines.append(name.ljust(width) + "".join(c.ljust(10) for c in cells).rstrip())
    return "\n".join(lines)
