"""Finite-difference verification of the full model's gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autodiff import Tensor, backward
from .config import TrainConfig, parse_config
from .data import END, START
from .training import new_model

TINY = """
batch_size = 2
encoder.feature_dim = 6
encoder.hidden_size = 4
encoder.glocal_dim = 5
encoder.dropout = 0.25
decoder.embed_dim = 3
decoder.max_len = 6
"""
TINY_VOCAB = 8
TINY_STORIES = 2
TINY_IMAGES = 3


def rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(
        np.maximum(np.abs(analytic), np.abs(numeric)), floor
    )


def numeric_grad(
    f: Callable[[], float], x: np.ndarray, h: float = 1e-6, order: int = 2
) -> np.ndarray:
    """Central differences of ``f`` with respect to every entry of ``x``.

    ``x`` is perturbed in place and restored. ``order=4`` uses the five-point
    stencil, whose truncation error is O(h**4).
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)

    def at(i, value):
        flat[i] = value
        return f()

    for i in range(flat.size):
        orig = flat[i]
        if order == 2:
            gflat[i] = (at(i, orig + h) - at(i, orig - h)) / (2 * h)
        else:
            gflat[i] = (
                at(i, orig - 2 * h) - 8 * at(i, orig - h)
                + 8 * at(i, orig + h) - at(i, orig + 2 * h)
            ) / (12 * h)
        flat[i] = orig
    return grad


@dataclass
class GradcheckReport:
    worst: dict[str, float] = field(default_factory=dict)
    tolerance: float = 1e-4

    @property
    def max_error(self) -> float:
        return max(self.worst.values())

    @property
    def worst_name(self) -> str:
        return max(self.worst, key=self.worst.get)

    @property
    def ok(self) -> bool:
        return self.max_error < self.tolerance


def tiny_problem(seed: int = 0, config: TrainConfig | None = None):
    """A random tiny model plus a batch of random stories to differentiate."""
    cfg = config if config is not None else parse_config(TINY)
    cfg.validate()
    rng = np.random.default_rng([seed, 99])
    model = new_model(cfg, TINY_VOCAB)
    # move batch-norm affine terms off their identity init so they are generic
    for name, p in model.parameters().items():
        if "bn" in name:
            p.data = p.data + rng.uniform(-0.5, 0.5, p.shape)
    feats = rng.uniform(-2, 2, (TINY_STORIES, TINY_IMAGES, cfg.encoder.feature_dim))
    targets = [
        [[START] + list(rng.integers(3, TINY_VOCAB, rng.integers(1, 4))) + [END]
         for _ in range(TINY_STORIES)]
        for _ in range(TINY_IMAGES)
    ]
    return model, feats, targets


def check_model_gradients(
    seed: int = 0,
    h: float = 1e-4,
    tolerance: float = 1e-4,
    include_features: bool = True,
    config: TrainConfig | None = None,
    floor: float = 1e-6,
) -> GradcheckReport:
    """Compare backprop with five-point differences for every parameter entry.

    The loss is the summed teacher-forced story loss in training mode, so
    batch norm uses batch statistics. Dropout masks are fixed by reseeding
    before each forward pass.

    Entries whose gradient is below ``floor`` in magnitude are judged on
    absolute error (the relative-error denominator never drops below
    ``floor``): differencing a loss of order 10 cannot resolve them, and the
    biases feeding batch norm have an exactly zero gradient. The default
    step balances stencil truncation against roundoff; a seed that puts a
    ReLU input within 2h of zero will show a spurious mismatch.
    """
    model, feats, targets = tiny_problem(seed, config)
    feat_t = Tensor(feats, requires_grad=include_features)

    def forward() -> Tensor:
        rng = np.random.default_rng([seed, 7])
        return model.story_loss(feat_t, targets, training=True, rng=rng).total_loss

    params = model.parameters()
    model.zero_grad()
    backward(forward())
    report = GradcheckReport(tolerance=tolerance)
    probe = lambda: float(forward().data)  # noqa: E731
    targets_to_check = dict(params)
    if include_features:
        targets_to_check["features"] = feat_t
    for name, p in targets_to_check.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        numeric = numeric_grad(probe, p.data, h, order=4)
        report.worst[name] = float(rel_error(analytic, numeric, floor).max())
    return report
