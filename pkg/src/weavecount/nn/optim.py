"""Adam optimizer with bias-corrected moment estimates."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor


def adam_update(
    weights: np.ndarray,
    grads: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    t: int,
    lr: float = 1e-3,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One functional Adam step; returns (new_weights, new_m, new_v).

    t is the 1-based step count used for bias correction.
    """
    if weights.shape != grads.shape:
        raise ValueError(f"weight shape {weights.shape} != grad shape {grads.shape}")
    b1, b2 = betas
    m = b1 * m + (1.0 - b1) * grads
    v = b2 * v + (1.0 - b2) * grads * grads
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    return weights - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


class Adam:
    """Stateful wrapper over adam_update for a parameter list."""

    def __init__(
        self,
        params: list[Tensor],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        for i, p in enumerate(self.params):
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            p.data, self.m[i], self.v[i] = adam_update(
                p.data, grad, self.m[i], self.v[i], self.t, self.lr, self.betas, self.eps
            )
