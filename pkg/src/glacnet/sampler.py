"""Generation-time word selection with a per-story repetition penalty.

A word already emitted ``c`` times in the current story has its probability
scaled by ``1 / (1 + k * c)`` before renormalizing; function words are left
alone. The next word is then the mode of ``n_samples`` draws from the
penalized distribution.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

from .autodiff import ContractError

END_ID = 2


@dataclass
class SamplerConfig:
    k: float = 0.3
    n_samples: int = 100
    exempt: frozenset[int] = field(default_factory=lambda: frozenset({END_ID}))
    seed: int = 0
    reset_per_sentence: bool = False

    def __post_init__(self):
        if self.k < 0:
            raise ValueError(f"sensitivity k must be non-negative, got {self.k}")
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be positive, got {self.n_samples}")
        self.exempt = frozenset(self.exempt) | {END_ID}


class WordCounter:
    """How often each token has been emitted in the current story."""

    def __init__(self):
        self.counts: Counter[int] = Counter()

    def __getitem__(self, token: int) -> int:
        return self.counts.get(token, 0)

    def __len__(self) -> int:
        return len(self.counts)

    def reset(self) -> None:
        self.counts.clear()

    def as_array(self, vocab_size: int) -> np.ndarray:
        arr = np.zeros(vocab_size)
        for tok, c in self.counts.items():
            arr[tok] = c
        return arr


def record_emission(counter: WordCounter, token: int) -> WordCounter:
    counter.counts[int(token)] += 1
    return counter


def _check_distribution(probs: np.ndarray) -> None:
    if probs.ndim != 1 or np.any(probs < 0) or not np.all(np.isfinite(probs)):
        raise ContractError("probabilities must be a finite non-negative vector")
    if abs(probs.sum() - 1.0) > 1e-9:
        raise ContractError(f"probabilities sum to {probs.sum()!r}, not 1")


def penalize(probs, counter: WordCounter, config: SamplerConfig) -> np.ndarray:
    """Down-weight already-emitted non-exempt words and renormalize."""
    probs = np.asarray(probs, dtype=np.float64)
    if config.k < 0:
        raise ValueError(f"sensitivity k must be non-negative, got {config.k}")
    _check_distribution(probs)
    if config.k == 0 or not any(
        c > 0 and tok not in config.exempt for tok, c in counter.counts.items()
    ):
        return probs.copy()
    counts = counter.as_array(len(probs))
    for tok in config.exempt:
        if tok < len(counts):
            counts[tok] = 0
    scaled = probs / (1.0 + config.k * counts)
    return scaled / scaled.sum()


def select_word(probs, config: SamplerConfig, rng: np.random.Generator) -> int:
    """Mode of ``n_samples`` draws; ties go to higher probability, then lower id."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1 or probs.sum() <= 0 or np.any(probs < 0):
        raise ContractError("cannot sample from a degenerate distribution")
    hits = rng.multinomial(config.n_samples, probs / probs.sum())
    # lexsort keys: last is primary
    order = np.lexsort((np.arange(len(probs)), -probs, -hits))
    return int(order[0])


def greedy_word(probs) -> int:
    return int(np.argmax(probs))


def read_word_list(path: str | Path) -> list[str]:
    """Words from a UTF-8 list file: one per line, ``#`` starts a comment."""
    text = Path(path).read_text(encoding="utf-8")
    return _parse_word_list(text.splitlines())


def _parse_word_list(lines: Iterable[str]) -> list[str]:
    words = []
    for line in lines:
        word = line.split("#", 1)[0].strip()
        if word:
            words.append(word.lower())
    return words


def default_function_words() -> list[str]:
    text = resources.files("glacnet").joinpath("data/function_words.txt").read_text("utf-8")
    return _parse_word_list(text.splitlines())


class StorySampler:
    """Turns decoder logits into words, keeping the story's emission counts.

    With ``use_penalty`` off this is plain sample-and-pick-the-mode (or argmax
    when ``greedy``); the counts are still kept so traces stay comparable.
    """

    def __init__(
        self,
        config: SamplerConfig,
        use_penalty: bool = True,
        greedy: bool = False,
        rng: np.random.Generator | None = None,
    ):
        self.config = config
        self.use_penalty = use_penalty
        self.greedy = greedy
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.counter = WordCounter()

    def start_story(self) -> None:
        self.counter.reset()

    def start_sentence(self) -> None:
        if self.config.reset_per_sentence:
            self.counter.reset()

    def distribution(self, logits: np.ndarray) -> np.ndarray:
        shifted = np.exp(logits - logits.max())
        probs = shifted / shifted.sum()
        if self.use_penalty:
            probs = penalize(probs, self.counter, self.config)
        return probs

    def choose(self, logits: np.ndarray) -> int:
        probs = self.distribution(logits)
        if self.greedy:
            token = greedy_word(probs)
        else:
            token = select_word(probs, self.config, self.rng)
        if token != END_ID:
            record_emission(self.counter, token)
        return token
