"""Sentence decoder whose LSTM state cascades from one sentence to the next."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autodiff import (
    Tensor,
    add,
    blend,
    concat,
    embedding,
    linear,
    softmax_cross_entropy,
)
from .data import END, PAD, START, DataError
from .glocal import ConfigError, GlocalVector, glocal_for_sentence
from .recurrent import LstmParams, LstmState, lstm_step, zero_state


@dataclass
class DecoderConfig:
    embed_dim: int = 256
    hidden_size: int | None = None  # None: same as the glocal dim
    cascading: bool = True
    max_len: int = 30
    vocab_size: int = 0

    def validate(self) -> None:
        if self.embed_dim < 1 or self.max_len < 1:
            raise ConfigError("embed_dim and max_len must be positive")
        if self.hidden_size is not None and self.hidden_size < 1:
            raise ConfigError("decoder hidden_size must be positive")


@dataclass
class DecoderParams:
    embed: Tensor  # (V, e)
    lstm: LstmParams  # input e + g
    out_w: Tensor  # (V, h_dec)
    out_b: Tensor  # (V,)

    @property
    def vocab_size(self) -> int:
        return self.embed.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.lstm.hidden_size

    def tensors(self) -> dict[str, Tensor]:
        out = {"embed": self.embed, "out_w": self.out_w, "out_b": self.out_b}
        out.update({f"lstm.{k}": v for k, v in self.lstm.tensors().items()})
        return out

    @classmethod
    def init(
        cls, vocab_size: int, embed_dim: int, glocal_dim: int, hidden_size: int,
        rng: np.random.Generator,
    ) -> "DecoderParams":
        bound = 1.0 / np.sqrt(hidden_size)
        return cls(
            Tensor(rng.normal(0.0, 0.1, (vocab_size, embed_dim)), requires_grad=True),
            LstmParams.init(embed_dim + glocal_dim, hidden_size, rng),
            Tensor(rng.uniform(-bound, bound, (vocab_size, hidden_size)), requires_grad=True),
            Tensor(np.zeros(vocab_size), requires_grad=True),
        )


def decode_step(
    prev_tokens, glocal: Tensor, state: LstmState, params: DecoderParams
) -> tuple[Tensor, LstmState]:
    """Feed ``[embed(prev_token), glocal]`` through one LSTM step.

    ``prev_tokens`` has one id per batch row; ``glocal`` is (batch, g).
    Returns (batch, V) logits and the new state.
    """
    x = concat([embedding(params.embed, np.atleast_1d(prev_tokens)), glocal], axis=1)
    new_state = lstm_step(x, state, params.lstm)
    return linear(new_state.h, params.out_w, params.out_b), new_state


def _check_target(seq: Sequence[int]) -> None:
    if len(seq) < 2 or seq[0] != START or seq[-1] != END:
        raise DataError(f"target must run from <start> to <end>: {list(seq)}")


def teacher_forced_sentence(
    targets: Sequence[Sequence[int]],
    glocal: Tensor,
    state_in: LstmState,
    params: DecoderParams,
    trace: list | None = None,
) -> tuple[Tensor, LstmState, int]:
    """Summed cross-entropy of a batch of ``<start> ... <end>`` sentences.

    Step i reads ground-truth token i and is scored on token i + 1. Rows that
    have finished keep their state, so ``state_out`` holds each row's state
    after its own ``<end>`` prediction.
    """
    for seq in targets:
        _check_target(seq)
    lengths = np.array([len(s) for s in targets])
    grid = np.full((len(targets), lengths.max()), PAD, dtype=np.int64)
    for b, seq in enumerate(targets):
        grid[b, : len(seq)] = seq

    state = state_in
    loss = None
    for i in range(lengths.max() - 1):
        live = i < lengths - 1
        logits, new_state = decode_step(grid[:, i], glocal, state, params)
        if trace is not None:
            trace.append({"glocal": glocal.data.copy(), "logits": logits.data.copy()})
        step = softmax_cross_entropy(logits, grid[:, i + 1], weights=live, reduction="sum")
        loss = step if loss is None else add(loss, step)
        if live.all():
            state = new_state
        else:
            state = LstmState(blend(live, new_state.h, state.h), blend(live, new_state.c, state.c))
    return loss, state, int((lengths - 1).sum())


def generate_sentence(
    glocal: Tensor,
    state_in: LstmState,
    choose: Callable[[np.ndarray], int],
    max_len: int,
    params: DecoderParams,
    trace: list | None = None,
) -> tuple[list[int], LstmState]:
    """Decode one sentence for a single story (batch of one).

    ``choose`` maps a logits vector to the next token id. Decoding stops at
    ``<end>`` (not returned) or after ``max_len`` tokens.
    """
    tokens: list[int] = []
    state = state_in
    prev = START
    for _ in range(max_len):
        logits, state = decode_step([prev], glocal, state, params)
        if trace is not None:
            trace.append({"glocal": glocal.data.copy(), "logits": logits.data.copy()})
        prev = int(choose(logits.data[0]))
        if prev == END:
            break
        tokens.append(prev)
    return tokens, state


@dataclass
class StoryResult:
    states_in: list[LstmState] = field(default_factory=list)
    states_out: list[LstmState] = field(default_factory=list)
    sentence_losses: list[Tensor] = field(default_factory=list)
    token_counts: list[int] = field(default_factory=list)
    sentences: list[list[int]] = field(default_factory=list)
    total_loss: Tensor | None = None

    @property
    def token_count(self) -> int:
        return sum(self.token_counts)


def run_story(
    glocals: Sequence[GlocalVector],
    params: DecoderParams,
    config: DecoderConfig,
    targets: Sequence[Sequence[Sequence[int]]] | None = None,
    sampler=None,
    trace: list | None = None,
) -> StoryResult:
    """Decode all S sentences of a story, threading state per ``config.cascading``.

    Teacher-forced mode takes ``targets[t][b]``, the token ids of sentence t
    of batch row b. Generation mode takes a sampler exposing ``start_story``,
    ``start_sentence`` and ``choose`` and needs a batch of one.
    """
    if (targets is None) == (sampler is None):
        raise ValueError("pass exactly one of targets (training) or sampler (generation)")
    s = len(glocals)
    batch = glocals[0].values.shape[0]
    if targets is not None and len(targets) != s:
        raise DataError(f"{len(targets)} sentences for {s} images")
    if sampler is not None:
        if batch != 1:
            raise ValueError("generation decodes one story at a time")
        sampler.start_story()

    result = StoryResult()
    zero = zero_state(params.hidden_size, batch)
    state = zero
    for t in range(s):
        if t > 0 and not config.cascading:
            state = zero
        result.states_in.append(state)
        g = glocal_for_sentence(glocals, t).values
        if targets is not None:
            if len(targets[t]) != batch:
                raise DataError(f"sentence {t}: {len(targets[t])} targets for batch of {batch}")
            loss, state, count = teacher_forced_sentence(targets[t], g, state, params, trace)
            result.sentence_losses.append(loss)
            result.token_counts.append(count)
            result.total_loss = loss if result.total_loss is None else add(result.total_loss, loss)
        else:
            sampler.start_sentence()
            tokens, state = generate_sentence(g, state, sampler.choose, config.max_len, params, trace)
            result.sentences.append(tokens)
        result.states_out.append(state)
    return result
