"""Glocal conditioning vectors: global encoder context plus local image features.

The selected channels are concatenated per image and pushed through a small
fully connected stack::

    fc1 -> batch norm -> dropout -> relu -> fc2 -> batch norm -> dropout

Batch norm runs over every (story, image) row of the batch at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import (
    ContractError,
    RunningStats,
    Tensor,
    batch_norm,
    concat,
    dropout,
    linear,
    relu,
)


class ConfigError(ValueError):
    """An inconsistent model or training configuration."""


@dataclass
class EncoderConfig:
    feature_dim: int = 2048
    hidden_size: int = 512
    glocal_dim: int = 1024
    use_global: bool = True
    use_local: bool = True
    dropout: float = 0.5

    def validate(self) -> None:
        if not (self.use_global or self.use_local):
            raise ConfigError("at least one of use_global and use_local must be enabled")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        for name in ("feature_dim", "hidden_size", "glocal_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")

    @property
    def concat_width(self) -> int:
        width = 0
        if self.use_global:
            width += 2 * self.hidden_size
        if self.use_local:
            width += self.feature_dim
        return width


@dataclass
class GlocalVector:
    values: Tensor
    source_index: int


@dataclass
class GlocalParams:
    fc1_w: Tensor
    fc1_b: Tensor
    bn1_gamma: Tensor
    bn1_beta: Tensor
    fc2_w: Tensor
    fc2_b: Tensor
    bn2_gamma: Tensor
    bn2_beta: Tensor
    bn1_stats: RunningStats = field(repr=False, default=None)  # type: ignore[assignment]
    bn2_stats: RunningStats = field(repr=False, default=None)  # type: ignore[assignment]

    def __post_init__(self):
        g = self.fc1_w.shape[0]
        if self.bn1_stats is None:
            self.bn1_stats = RunningStats(g)
        if self.bn2_stats is None:
            self.bn2_stats = RunningStats(g)

    def tensors(self) -> dict[str, Tensor]:
        return {
            "fc1_w": self.fc1_w,
            "fc1_b": self.fc1_b,
            "bn1_gamma": self.bn1_gamma,
            "bn1_beta": self.bn1_beta,
            "fc2_w": self.fc2_w,
            "fc2_b": self.fc2_b,
            "bn2_gamma": self.bn2_gamma,
            "bn2_beta": self.bn2_beta,
        }

    @classmethod
    def init(cls, in_width: int, glocal_dim: int, rng: np.random.Generator) -> "GlocalParams":
        def fc(n_in, n_out):
            bound = 1.0 / np.sqrt(n_in)
            return (
                Tensor(rng.uniform(-bound, bound, (n_out, n_in)), requires_grad=True),
                Tensor(np.zeros(n_out), requires_grad=True),
            )

        w1, b1 = fc(in_width, glocal_dim)
        w2, b2 = fc(glocal_dim, glocal_dim)
        ones = lambda: Tensor(np.ones(glocal_dim), requires_grad=True)  # noqa: E731
        zeros = lambda: Tensor(np.zeros(glocal_dim), requires_grad=True)  # noqa: E731
        return cls(w1, b1, ones(), zeros(), w2, b2, ones(), zeros())


def build_glocal(
    features: Sequence[Tensor],
    global_outputs: Sequence[Tensor],
    params: GlocalParams,
    config: EncoderConfig,
    training: bool,
    rng: np.random.Generator | None = None,
) -> list[GlocalVector]:
    """One g-dimensional conditioning vector per image position.

    ``features[t]`` is (batch, d) and ``global_outputs[t]`` is (batch, 2h).
    Disabled channels are left out of the concatenation entirely.
    """
    config.validate()
    if len(features) != len(global_outputs):
        raise ContractError(
            f"{len(features)} feature positions but {len(global_outputs)} encoder outputs"
        )
    return _fc_stack(
        [_select_channels(f, o, config) for f, o in zip(features, global_outputs)],
        params,
        config.dropout,
        training,
        rng,
    )


def _select_channels(feature: Tensor, global_out: Tensor, config: EncoderConfig) -> Tensor:
    parts = []
    if config.use_global:
        parts.append(global_out)
    if config.use_local:
        parts.append(feature)
    return concat(parts, axis=1)


def _fc_stack(
    rows: Sequence[Tensor],
    params: GlocalParams,
    rate: float,
    training: bool,
    rng: np.random.Generator | None,
) -> list[GlocalVector]:
    s = len(rows)
    batch = rows[0].shape[0]
    x = concat(list(rows), axis=0)  # row t*batch + b
    x = linear(x, params.fc1_w, params.fc1_b)
    x = batch_norm(x, params.bn1_gamma, params.bn1_beta, params.bn1_stats, training)
    x = relu(dropout(x, rate, training, rng))
    x = linear(x, params.fc2_w, params.fc2_b)
    x = batch_norm(x, params.bn2_gamma, params.bn2_beta, params.bn2_stats, training)
    x = dropout(x, rate, training, rng)
    if s == 1:
        return [GlocalVector(x, 0)]
    return [GlocalVector(x[t * batch : (t + 1) * batch], t) for t in range(s)]


def build_story_context(
    summary: Tensor,
    n_sentences: int,
    params: GlocalParams,
    config: EncoderConfig,
    training: bool,
    rng: np.random.Generator | None = None,
) -> list[GlocalVector]:
    """Plain seq2seq conditioning: one story-level vector reused for every sentence.

    ``summary`` is the (batch, 2h) pair of final encoder states; it goes
    through the same fully connected stack as the glocal channels, once per
    sentence so batch statistics see as many rows as the glocal path does.
    """
    return _fc_stack([summary] * n_sentences, params, config.dropout, training, rng)


def glocal_for_sentence(glocals: Sequence[GlocalVector], t: int) -> GlocalVector:
    if not 0 <= t < len(glocals):
        raise ContractError(f"sentence index {t} outside [0, {len(glocals)})")
    return glocals[t]
