"""Masked, edge-weighted MSE and scale-invariant MSE objectives.

Predictions are :class:`Tensor` batches ``(N, 3, H, W)``; targets, masks and
weights are plain arrays.  Every reduction is per sample over (C, H, W), and
the scale ``alpha`` is one scalar per sample and head.
"""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .numerics import Tensor, where

LUMA = np.array([0.2126, 0.7152, 0.0722])
_SUM_AXES = (1, 2, 3)
HEADS = ("albedo", "shading", "specular")


@dataclass
class LossConfig:
    w_smse: float = 0.95
    w_mse: float = 0.05
    edge_lambda: float = 4.0
    eps_denominator: float = 1e-8

    def __post_init__(self):
        if abs(self.w_smse + self.w_mse - 1.0) > 1e-12:
            raise ValueError(f"w_smse + w_mse must equal 1, got {self.w_smse + self.w_mse}")
        if self.edge_lambda < 0:
            raise ValueError(f"edge_lambda must be non-negative, got {self.edge_lambda}")

    def to_dict(self) -> dict:
        return asdict(self)


def _batch(x) -> Tensor:
    t = x if isinstance(x, Tensor) else Tensor(np.asarray(x))
    if t.ndim == 3:
        t = t.reshape((1,) + t.shape)
    if t.ndim != 4:
        raise ValueError(f"expected (N, C, H, W) or (C, H, W), got shape {t.shape}")
    return t


def _weights(weights, like: Tensor) -> np.ndarray:
    w = np.asarray(weights, dtype=like.dtype)
    if w.ndim == 2:
        w = w[None, None]
    elif w.ndim == 3:
        w = w[:, None]
    if w.ndim != 4 or w.shape[0] not in (1, like.shape[0]) or w.shape[2:] != like.shape[2:]:
        raise ValueError(f"weights of shape {np.shape(weights)} do not match images {like.shape}")
    return w


def _reduce(value):
    return value if value.data.size != 1 else value.reshape(())


def edge_weights(image, mask, edge_lambda: float = 4.0) -> np.ndarray:
    """Per-pixel weights ``1 + lambda * |grad luminance|_1``, masked mean 1.

    ``image`` is ``(N, 3, H, W)`` or ``(3, H, W)``; ``mask`` the matching
    ``(N, H, W)`` or ``(H, W)``.  Luminance is taken of the masked image and
    differentiated with central differences (edge-replicated borders), so
    pixels outside the mask never influence the result.  Returns ``(N, 1, H, W)``
    (or ``(1, H, W)`` for a single image).
    """
    img = np.asarray(image, dtype=np.float64)
    m = np.asarray(mask).astype(bool)
    single = img.ndim == 3
    if single:
        img, m = img[None], m[None]
    lum = np.tensordot(LUMA, img, axes=([0], [1])) * m
    p = np.pad(lum, ((0, 0), (1, 1), (1, 1)), mode="edge")
    gx = (p[:, 1:-1, 2:] - p[:, 1:-1, :-2]) / 2
    gy = (p[:, 2:, 1:-1] - p[:, :-2, 1:-1]) / 2
    raw = (1.0 + edge_lambda * (np.abs(gx) + np.abs(gy))) * m
    total = raw.sum(axis=(1, 2), keepdims=True)
    count = m.sum(axis=(1, 2), keepdims=True)
    w = np.where(count > 0, raw * count / np.where(total > 0, total, 1.0), 0.0)
    w = w[:, None]
    return w[0] if single else w


def weighted_mse(pred, gt, weights) -> Tensor:
    """``sum w (pred - gt)^2 / (C * sum w)`` per sample."""
    x = _batch(pred)
    g = np.asarray(gt, dtype=x.dtype).reshape(x.shape)
    w = _weights(weights, x)
    den = x.shape[1] * np.broadcast_to(w, (x.shape[0], 1) + x.shape[2:]).sum(axis=_SUM_AXES)
    diff = x - g
    return _reduce((diff.square() * w).sum(axis=_SUM_AXES) / den)


def optimal_scale(pred, gt, weights, eps: float = 1e-8) -> Tensor:
    """Closed-form ``argmin_alpha >= 0`` of the weighted MSE; 1 when ``sum w X^2 < eps``.

    The scale is kept non-negative so a sign-flipped prediction cannot score
    as well as the true layer.
    """
    x = _batch(pred)
    g = np.asarray(gt, dtype=x.dtype).reshape(x.shape)
    w = _weights(weights, x)
    num = (x * (w * g)).sum(axis=_SUM_AXES)
    den = (x.square() * w).sum(axis=_SUM_AXES)
    degenerate = den.data < eps
    safe = where(degenerate, Tensor(np.ones_like(den.data)), den)
    alpha = where(num.data < 0, Tensor(np.zeros_like(den.data)), num / safe)
    alpha = where(degenerate, Tensor(np.ones_like(den.data)), alpha)
    return _reduce(alpha)


def smse(pred, gt, weights, eps: float = 1e-8) -> Tensor:
    """Weighted MSE after rescaling the prediction by :func:`optimal_scale`."""
    x = _batch(pred)
    alpha = optimal_scale(x, gt, weights, eps).reshape(-1, 1, 1, 1)
    return weighted_mse(x * alpha, gt, weights)


def loss_diffuse(pred, gt, weights, config: LossConfig | None = None) -> Tensor:
    """Albedo/shading objective: ``0.95 * SMSE + 0.05 * MSE``."""
    config = config or LossConfig()
    return (config.w_smse * smse(pred, gt, weights, config.eps_denominator)
            + config.w_mse * weighted_mse(pred, gt, weights))


def loss_specular(pred, gt, weights, config: LossConfig | None = None) -> Tensor:
    """Specular objective: plain weighted MSE (no scale freedom)."""
    return weighted_mse(pred, gt, weights)


def head_losses(preds, targets, mask, image, config: LossConfig | None = None) -> dict:
    """Per-head objectives, each averaged over the samples with a non-empty mask.

    ``preds`` are the three network outputs; ``targets`` the matching arrays
    ``(N, 3, H, W)``; ``mask`` is ``(N, H, W)`` and ``image`` the network input
    used for the edge weights.  Samples with an empty mask are dropped with a
    warning; if none remain every head is a constant zero.
    """
    config = config or LossConfig()
    m = np.asarray(mask).astype(bool)
    if m.ndim == 2:
        m = m[None]
    keep = np.flatnonzero(m.reshape(len(m), -1).any(axis=1))
    if len(keep) < len(m):
        warnings.warn(f"skipping {len(m) - len(keep)} sample(s) with an empty mask", RuntimeWarning)
    if len(keep) == 0:
        zero = np.zeros((), dtype=_batch(preds[0]).dtype)
        return {name: Tensor(zero.copy()) for name in HEADS}
    w = edge_weights(np.asarray(image)[keep], m[keep], config.edge_lambda)
    out = {}
    for name, p, t in zip(HEADS, preds, targets):
        x = _batch(p)
        if len(keep) < len(m):
            x = x[keep]
        fn = loss_specular if name == "specular" else loss_diffuse
        out[name] = fn(x, np.asarray(t)[keep], w, config).reshape(-1).mean()
    return out


def total_loss(preds, targets, mask, image, config: LossConfig | None = None) -> Tensor:
    """Mean over samples of ``L_diff(A) + L_diff(S) + L_spec(R)``."""
    heads = head_losses(preds, targets, mask, image, config)
    return heads["albedo"] + heads["shading"] + heads["specular"]


def loss_terms(preds, targets, mask, image, config: LossConfig | None = None) -> dict:
    """Per-head loss values (floats) for logging."""
    return {k: float(v.data) for k, v in head_losses(preds, targets, mask, image, config).items()}
