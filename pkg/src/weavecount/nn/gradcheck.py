"""Central finite-difference verification of reverse-mode gradients."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor


def gradient_check(
    fn: Callable[[], Tensor],
    tensors: list[Tensor],
    rng: np.random.Generator | None = None,
    max_coords: int = 40,
    h: float = 1e-4,
    skip_kinks: bool = False,
) -> float:
    """Max relative error between analytic and numeric gradients.

    fn must rebuild the scalar loss from the given tensors on every call
    (pure function of their .data).  For each tensor up to max_coords
    coordinates are perturbed by +/-h; the relative error is
    |a - n| / max(|a|, |n|, 1e-8).

    With skip_kinks, coordinates whose h and h/2 difference quotients
    disagree are dropped: there the function is non-smooth within the
    stencil (a ReLU or max-pool boundary) and central differences do not
    estimate the one-sided derivative the backward pass returns.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    for t in tensors:
        t.grad = None
    out = fn()
    out.backward()
    worst = 0.0
    for t in tensors:
        if t.grad is None:
            raise ValueError("tensor received no gradient; is it part of the graph?")
        analytic = t.grad
        size = t.data.size
        if size <= max_coords:
            coords = np.arange(size)
        else:
            coords = rng.choice(size, size=max_coords, replace=False)
        flat = t.data.reshape(-1)

        def quotient(c: int, step: float) -> float:
            original = flat[c]
            flat[c] = original + step
            f_plus = float(fn().data)
            flat[c] = original - step
            f_minus = float(fn().data)
            flat[c] = original
            return (f_plus - f_minus) / (2.0 * step)

        for c in coords:
            numeric = quotient(c, h)
            if skip_kinks:
                refined = quotient(c, h / 2.0)
                if abs(numeric - refined) > 1e-3 * max(abs(numeric), abs(refined), 1e-8):
                    continue
                numeric = refined
            a = float(analytic.reshape(-1)[c])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst
