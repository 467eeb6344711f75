"""Central-finite-difference validation of analytic gradients."""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .params import Params


def grad_check(
    params: Params,
    loss_and_grads: Callable[[], float],
    loss_only: Callable[[], float],
    h: float = 1e-5,
    max_entries_per_tensor: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Max relative error between analytic and numeric parameter gradients.

    loss_and_grads() must populate params.grads; loss_only() is a pure
    forward evaluation at the current parameter values. Every entry of every
    tensor is probed unless max_entries_per_tensor subsamples (deterministic
    given rng). The relative error denominator is max(|a|, |n|, 1e-8).
    """
    params.zero_grads()
    loss_and_grads()
    analytic = {k: g.copy() for k, g in params.grads.items()}

    worst = 0.0
    for name in sorted(params.values):
        flat = params.values[name].reshape(-1)
        aflat = analytic[name].reshape(-1)
        idxs = np.arange(flat.size)
        if max_entries_per_tensor is not None and flat.size > max_entries_per_tensor:
            if rng is None:
                rng = np.random.default_rng(0)
            idxs = rng.choice(flat.size, size=max_entries_per_tensor, replace=False)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_only()
            flat[i] = orig - h
            lm = loss_only()
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * h)
            a = aflat[i]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
    params.zero_grads()
    return worst
