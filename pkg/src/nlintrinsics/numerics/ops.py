"""Layer operations for NCHW feature maps."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import Tensor

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def _check_4d(x: Tensor, what: str) -> None:
    if x.ndim != 4:
        raise ValueError(f"{what} must be 4-D (N, C, H, W), got shape {x.shape}")


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, pad: int = 1) -> Tensor:
    """3x3 cross-correlation with zero padding.

    Output spatial size is ``(H + 2*pad - 3) // stride + 1``.  Implemented as
    one im2col matrix product per call; the backward pass scatters the column
    gradients back through the nine kernel offsets.
    """
    _check_4d(x, "conv2d input")
    if weight.ndim != 4 or weight.shape[2:] != (3, 3):
        raise ValueError(f"conv2d weight must be (Cout, Cin, 3, 3), got {weight.shape}")
    if stride not in (1, 2):
        raise ValueError(f"stride must be 1 or 2, got {stride}")
    if pad not in (0, 1):
        raise ValueError(f"pad must be 0 or 1, got {pad}")
    n, cin, h, w = x.shape
    cout = weight.shape[0]
    if weight.shape[1] != cin:
        raise ValueError(
            f"conv2d channel mismatch: input has {cin} channels (dim 1), "
            f"weight expects {weight.shape[1]}")
    if bias is not None and bias.shape != (cout,):
        raise ValueError(f"conv2d bias must have shape ({cout},), got {bias.shape}")

    ho = (h + 2 * pad - 3) // stride + 1
    wo = (w + 2 * pad - 3) // stride + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d input {h}x{w} too small for 3x3 kernel with pad {pad}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    xt = xp.transpose(1, 0, 2, 3)
    span_h = stride * (ho - 1) + 1
    span_w = stride * (wo - 1) + 1
    # columns laid out (Cin*9, N*Ho*Wo) so both products run on contiguous operands
    cols = np.empty((cin, 9, n, ho, wo), dtype=x.dtype)
    for ky in range(3):
        for kx in range(3):
            cols[:, ky * 3 + kx] = xt[:, :, ky:ky + span_h:stride, kx:kx + span_w:stride]
    cols = cols.reshape(cin * 9, n * ho * wo)
    wmat = weight.data.reshape(cout, cin * 9)
    out = wmat @ cols
    if bias is not None:
        out += bias.data[:, None]
    out = np.ascontiguousarray(out.reshape(cout, n, ho, wo).transpose(1, 0, 2, 3))

    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gt = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(cout, n * ho * wo)
        if weight.requires_grad:
            weight._accumulate((gt @ cols.T).reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            bias._accumulate(gt.sum(axis=1))
        if x.requires_grad:
            dcols = (wmat.T @ gt).reshape(cin, 9, n, ho, wo)
            dxt = np.zeros((cin, n) + xp.shape[2:], dtype=x.dtype)
            for ky in range(3):
                for kx in range(3):
                    dxt[:, :, ky:ky + span_h:stride, kx:kx + span_w:stride] += dcols[:, ky * 3 + kx]
            dx = dxt.transpose(1, 0, 2, 3)
            x._accumulate(dx[:, :, pad:pad + h, pad:pad + w] if pad else dx)

    return Tensor._make(out, parents, backward)


def batch_norm2d(x: Tensor, gamma: Tensor, beta: Tensor, training: bool,
                 running_mean: np.ndarray, running_var: np.ndarray,
                 momentum: float = BN_MOMENTUM, eps: float = BN_EPS) -> Tensor:
    """Per-channel batch normalization.

    In training mode the batch statistics over (N, H, W) normalize the input
    and the running estimates are updated in place (unbiased variance).  In
    eval mode only the running estimates are read.
    """
    _check_4d(x, "batch_norm2d input")
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(f"gamma/beta must have shape ({c},), got {gamma.shape}, {beta.shape}")
    shape = (1, c, 1, 1)
    if training:
        count = n * h * w
        if count < 2:
            raise ValueError("batch_norm2d in training mode needs at least 2 values per channel")
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * var * (count / (count - 1))
    else:
        count = None
        mean = running_mean
        var = running_var
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mean.reshape(shape).astype(x.dtype)) * inv_std.reshape(shape)
    out = gamma.data.reshape(shape) * xhat + beta.data.reshape(shape)

    def backward(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=(0, 2, 3)))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dxhat = g * gamma.data.reshape(shape)
            if training:
                m1 = dxhat.mean(axis=(0, 2, 3), keepdims=True)
                m2 = (dxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
                x._accumulate(inv_std.reshape(shape) * (dxhat - m1 - xhat * m2))
            else:
                x._accumulate(dxhat * inv_std.reshape(shape))

    return Tensor._make(out, (x, gamma, beta), backward)


def relu(x: Tensor) -> Tensor:
    return x.relu()


def upsample_nearest2x(x: Tensor) -> Tensor:
    """Replicate every pixel into a 2x2 block."""
    _check_4d(x, "upsample input")
    n, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def backward(g):
        x._accumulate(g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)))

    return Tensor._make(out, (x,), backward)


def avg_pool2x(x: Tensor) -> Tensor:
    """Mean over non-overlapping 2x2 blocks."""
    _check_4d(x, "pool input")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"avg_pool2x needs even height/width, got {h}x{w}")
    out = x.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def backward(g):
        up = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3)
        x._accumulate(up * 0.25)

    return Tensor._make(out, (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    """Concatenate along channels (or ``axis``)."""
    tensors = list(tensors)
    if len(tensors) == 1:
        return tensors[0]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                t._accumulate(g[tuple(index)])

    return Tensor._make(out, tensors, backward)


def channel_slice(x: Tensor, start: int, stop: int) -> Tensor:
    return x[:, start:stop]
