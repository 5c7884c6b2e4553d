"""Finite-difference validation of reverse-mode gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import NonFiniteError, Tensor, no_grad

# Per-entry relative error is |a - n| / max(|a|, |n|, REL_FLOOR); the floor keeps
# entries whose true gradient is ~0 from turning round-off into huge ratios.
REL_FLOOR = 1e-3


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-5,
    max_entries: int | None = 40,
    seed: int = 0,
) -> float:
    """Worst relative error between reverse-mode and central-difference gradients.

    ``f`` rebuilds the scalar loss from the current parameter values.  Large
    parameters are probed on a random subset of ``max_entries`` entries.
    """
    rng = np.random.default_rng(seed)
    for p in params:
        p.grad = None
    loss = f()
    if not np.isfinite(loss.data).all():
        raise NonFiniteError("loss is not finite")
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    with no_grad():
        for p, g in zip(params, analytic):
            flat = p.data.reshape(-1)
            idx = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                idx = rng.choice(flat.size, size=max_entries, replace=False)
            for i in idx:
                orig = flat[i]
                flat[i] = orig + step
                up = f().item()
                flat[i] = orig - step
                down = f().item()
                flat[i] = orig
                num = (up - down) / (2.0 * step)
                a = g.reshape(-1)[i]
                err = abs(a - num) / max(abs(a), abs(num), REL_FLOOR)
                worst = max(worst, err)
    for p in params:
        p.grad = None
    return worst
