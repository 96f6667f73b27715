"""Central-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward


def relative_error(a: float, b: float, floor: float = 1e-8) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_gradients(fn: Callable[[], Tensor], params: Sequence[Tensor],
                    n_samples: int | None = None, eps: float = 1e-4,
                    rng: np.random.Generator | None = None,
                    floor: float = 1e-8) -> float:
    """Compare analytic and central-difference gradients of ``fn()``.

    ``fn`` must rebuild the graph from ``params`` on every call and return a
    scalar.  Parameters should be float64.  With ``n_samples`` set, that many
    entries are drawn uniformly over all parameter entries; otherwise every
    entry is checked.  Returns the worst relative error.
    """
    for p in params:
        p.grad = None
    loss = fn()
    backward(loss, params)
    analytic = [p.grad.copy() for p in params]

    sizes = np.array([p.data.size for p in params])
    if n_samples is None:
        picks = [(i, j) for i, s in enumerate(sizes) for j in range(s)]
    else:
        rng = rng or np.random.default_rng(0)
        flat = rng.choice(sizes.sum(), size=min(n_samples, sizes.sum()), replace=False)
        offsets = np.cumsum(sizes) - sizes
        picks = []
        for f in flat:
            i = int(np.searchsorted(offsets, f, side="right") - 1)
            picks.append((i, int(f - offsets[i])))

    worst = 0.0
    for i, j in picks:
        p = params[i].data.reshape(-1)
        orig = p[j]
        p[j] = orig + eps
        up = float(fn().data)
        p[j] = orig - eps
        down = float(fn().data)
        p[j] = orig
        numeric = (up - down) / (2 * eps)
        worst = max(worst, relative_error(float(analytic[i].reshape(-1)[j]), numeric, floor))
    return worst
