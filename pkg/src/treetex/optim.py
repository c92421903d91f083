"""First-order optimizers over named parameter dicts."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


def sgd_step(params: dict[str, Tensor], lr: float) -> None:
    """In-place gradient descent step. Parameters without a grad are skipped."""
    for p in params.values():
        if p.grad is not None:
            p.data = p.data - lr * p.grad


class AdamState:
    """Per-parameter first/second moment accumulators."""

    def __init__(self):
        self.step = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def adam_step(
    params: dict[str, Tensor],
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Bias-corrected Adam update; deterministic given identical inputs."""
    state.step += 1
    t = state.step
    for name, p in params.items():
        if p.grad is None:
            continue
        g = p.grad
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)
