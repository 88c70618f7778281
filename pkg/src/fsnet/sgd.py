"""Minibatch SGD with classical momentum and L2 weight decay."""

from __future__ import annotations

import numpy as np


class SgdOptimizer:
    """v <- momentum * v - lr * (grad + weight_decay * param); param += v.

    Velocity is kept per parameter name, created lazily at zero, so the
    same optimizer instance can step different parameter subsets (e.g.
    fc-only during online updates).
    """

    def __init__(self, lr: float, momentum: float = 0.9,
                 weight_decay: float = 0.0):
        if lr <= 0:
            raise ValueError(f"lr must be positive, got {lr}")
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        """Update params in place for every name present in grads."""
        for name, g in grads.items():
            p = params[name]
            if g.shape != p.shape:
                raise ValueError(
                    f"gradient shape {g.shape} does not match param "
                    f"{name} of shape {p.shape}"
                )
            v = self.velocity.get(name)
            if v is None:
                v = np.zeros_like(p)
            v = self.momentum * v - self.lr * (g + self.weight_decay * p)
            self.velocity[name] = v
            p += v
