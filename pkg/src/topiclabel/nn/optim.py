"""Learned parameters and optimizer updates (Adam, RMSProp)."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .autodiff import Tensor


class Parameter(Tensor):
    """A named learnable tensor with gradient and optimizer state."""

    __slots__ = ("name", "adam_m", "adam_v")

    def __init__(self, data: np.ndarray, name: str):
        super().__init__(np.asarray(data))
        self.name = name
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)


def adam_step(
    params: Sequence[Parameter],
    t: int,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One Adam update with bias correction; t is the 1-based step index."""
    if t < 1:
        raise ValueError("Adam step index must be >= 1")
    for p in params:
        g = p.grad
        if g is None:
            continue
        p.adam_m = beta1 * p.adam_m + (1.0 - beta1) * g
        p.adam_v = beta2 * p.adam_v + (1.0 - beta2) * g * g
        m_hat = p.adam_m / (1.0 - beta1**t)
        v_hat = p.adam_v / (1.0 - beta2**t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)


def rmsprop_step(
    params: Sequence[Parameter],
    lr: float,
    decay: float = 0.9,
    eps: float = 1e-8,
) -> None:
    """One RMSProp update; running squared-gradient average lives in adam_v."""
    for p in params:
        g = p.grad
        if g is None:
            continue
        p.adam_v = decay * p.adam_v + (1.0 - decay) * g * g
        p.data -= lr * g / (np.sqrt(p.adam_v) + eps)
