"""Adam with L2 weight decay, plus global-norm gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .autodiff import ContractError, Tensor


@dataclass
class AdamConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class Moments:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    moments: Moments,
    t: int,
    config: AdamConfig,
) -> tuple[dict[str, np.ndarray], Moments]:
    """Return updated parameters and moments for step ``t`` (1-based).

    Weight decay enters as ``grad + weight_decay * param`` before the moment
    updates. Inputs are not modified.
    """
    if t < 1:
        raise ContractError(f"Adam step counter starts at 1, got {t}")
    b1, b2 = config.beta1, config.beta2
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise ContractError(f"{name}: gradient {g.shape} vs parameter {p.shape}")
        m = moments.m.get(name, np.zeros_like(p))
        v = moments.v.get(name, np.zeros_like(p))
        if m.shape != p.shape or v.shape != p.shape:
            raise ContractError(f"{name}: moment shapes do not match parameter {p.shape}")
        if config.weight_decay:
            g = g + config.weight_decay * p
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_params[name] = p - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
        new_m[name], new_v[name] = m, v
    return new_params, Moments(new_m, new_v, t)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale ``grads`` in place so their joint L2 norm is at most ``max_norm``.

    Returns the norm before clipping. ``max_norm <= 0`` disables clipping.
    """
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for k in grads:
            grads[k] = grads[k] * scale
    return total


class Adam:
    """Stateful wrapper that updates a dict of tensors in place."""

    def __init__(self, params: Mapping[str, Tensor], config: AdamConfig):
        self.params = dict(params)
        self.config = config
        self.moments = Moments()

    def step(self, grads: Mapping[str, np.ndarray] | None = None) -> None:
        if grads is None:
            grads = {k: p.grad for k, p in self.params.items() if p.grad is not None}
        current = {k: p.data for k, p in self.params.items()}
        updated, self.moments = adam_step(
            current, grads, self.moments, self.moments.t + 1, self.config
        )
        for k, p in self.params.items():
            p.data = updated[k]

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
