"""Story records, vocabulary, corpus files and a synthetic story generator.

Corpus files are UTF-8 JSON lines, one story per line::

    {"story_id": "...", "features": [[...], ...], "sentences": [["the", "dog", ...], ...]}

``features`` and ``sentences`` are aligned: entry t of each belongs to image t.

Converting VIST data: take each SIS story's five aligned annotations in
order, tokenize each ``text`` field with :func:`tokenize`, and pair it with the
feature vector an external extractor produced for the matching ``photo_flickr_id``.
Any extractor works so long as every vector in a corpus has the same length.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PAD, START, END, UNK = 0, 1, 2, 3
SPECIALS = ("<pad>", "<start>", "<end>", "<unk>")

_TOKEN_RE = re.compile(r"\w+(?:'\w+)?|[^\w\s]")


class DataError(ValueError):
    """Corpus content violates a record invariant."""


class CorpusParseError(DataError):
    """A corpus line could not be parsed."""


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, keep punctuation marks as tokens."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(eq=False)
class StoryRecord:
    story_id: str
    features: np.ndarray  # (S, feature_dim)
    sentences: list[list[str]]

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise DataError(f"story {self.story_id}: features must be a list of vectors")
        if len(self.features) != len(self.sentences):
            raise DataError(
                f"story {self.story_id}: {len(self.features)} images but "
                f"{len(self.sentences)} sentences"
            )
        if len(self.sentences) == 0:
            raise DataError(f"story {self.story_id}: no images")

    @property
    def n_images(self) -> int:
        return len(self.sentences)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, StoryRecord):
            return NotImplemented
        return (
            self.story_id == other.story_id
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and self.sentences == other.sentences
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "story_id": self.story_id,
                "features": self.features.tolist(),
                "sentences": self.sentences,
            }
        )


@dataclass
class CorpusSplit:
    train: list[StoryRecord]
    validation: list[StoryRecord]
    test: list[StoryRecord]

    def __post_init__(self):
        ids = [r.story_id for part in (self.train, self.validation, self.test) for r in part]
        if len(ids) != len(set(ids)):
            raise DataError("corpus splits share story ids")


def split_corpus(
    records: Sequence[StoryRecord], valid_frac: float = 0.1, test_frac: float = 0.1, seed: int = 0
) -> CorpusSplit:
    order = np.random.default_rng(seed).permutation(len(records))
    n_valid = int(round(valid_frac * len(records)))
    n_test = int(round(test_frac * len(records)))
    pick = lambda idx: [records[i] for i in sorted(idx)]  # noqa: E731
    return CorpusSplit(
        train=pick(order[n_valid + n_test :]),
        validation=pick(order[:n_valid]),
        test=pick(order[n_valid : n_valid + n_test]),
    )


# ---------------------------------------------------------------------------
# vocabulary
# ---------------------------------------------------------------------------


@dataclass
class Vocabulary:
    words: list[str]
    min_count: int = 1
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if tuple(self.words[:4]) != SPECIALS:
            raise DataError("vocabulary must start with the reserved tokens")
        self.index = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise DataError("vocabulary contains duplicate words")

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def id(self, word: str) -> int:
        return self.index.get(word, UNK)

    def word(self, idx: int) -> str:
        return self.words[idx]

    def encode(self, words: Sequence[str]) -> list[int]:
        """Token ids wrapped in ``<start>`` ... ``<end>``."""
        return [START] + [self.id(w) for w in words] + [END]

    def decode(self, ids: Iterable[int]) -> list[str]:
        out = []
        for i in ids:
            if i == END:
                break
            if i in (PAD, START):
                continue
            out.append(self.words[i])
        return out

    def ids_for(self, words: Iterable[str]) -> set[int]:
        return {self.index[w] for w in words if w in self.index}


def build_vocab(records: Sequence[StoryRecord], min_count: int = 1) -> Vocabulary:
    """Frequency-ordered vocabulary; ties broken alphabetically."""
    if not records:
        raise DataError("cannot build a vocabulary from an empty corpus")
    freq: Counter[str] = Counter()
    for rec in records:
        for sent in rec.sentences:
            freq.update(sent)
    kept = sorted(
        (w for w, c in freq.items() if c >= min_count and w not in SPECIALS),
        key=lambda w: (-freq[w], w),
    )
    return Vocabulary(list(SPECIALS) + kept, min_count=min_count)


# ---------------------------------------------------------------------------
# corpus files
# ---------------------------------------------------------------------------


def _parse_record(obj, line_no: int) -> StoryRecord:
    if not isinstance(obj, dict):
        raise CorpusParseError(f"line {line_no}: expected a JSON object")
    sid = obj.get("story_id", "?")
    missing = {"story_id", "features", "sentences"} - obj.keys()
    if missing:
        raise CorpusParseError(f"line {line_no} (story {sid}): missing {sorted(missing)}")
    feats, sents = obj["features"], obj["sentences"]
    if not isinstance(sid, str):
        raise CorpusParseError(f"line {line_no}: story_id must be a string")
    if not (isinstance(sents, list) and all(
        isinstance(s, list) and all(isinstance(w, str) for w in s) for s in sents
    )):
        raise CorpusParseError(f"line {line_no} (story {sid}): sentences must be lists of strings")
    if not (isinstance(feats, list) and all(isinstance(f, list) for f in feats)):
        raise CorpusParseError(f"line {line_no} (story {sid}): features must be lists of numbers")
    if len({len(f) for f in feats}) > 1:
        raise DataError(f"line {line_no} (story {sid}): feature vectors differ in length")
    try:
        arr = np.array(feats, dtype=np.float64)
    except (TypeError, ValueError):
        raise CorpusParseError(f"line {line_no} (story {sid}): non-numeric feature value") from None
    if len(feats) != len(sents):
        raise DataError(
            f"line {line_no} (story {sid}): alignment error, "
            f"{len(feats)} features but {len(sents)} sentences"
        )
    if not np.all(np.isfinite(arr)):
        raise DataError(f"line {line_no} (story {sid}): non-finite feature value")
    try:
        return StoryRecord(sid, arr, [list(s) for s in sents])
    except DataError as exc:
        raise DataError(f"line {line_no}: {exc}") from None


def load_corpus(path: str | Path) -> list[StoryRecord]:
    records: list[StoryRecord] = []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(f"line {line_no}: invalid JSON ({exc.msg})") from None
            rec = _parse_record(obj, line_no)
            if dim is None:
                dim = rec.feature_dim
            elif rec.feature_dim != dim:
                raise DataError(
                    f"line {line_no} (story {rec.story_id}): feature dim "
                    f"{rec.feature_dim}, corpus uses {dim}"
                )
            records.append(rec)
    return records


def save_corpus(records: Iterable[StoryRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")


# ---------------------------------------------------------------------------
# synthetic stories
# ---------------------------------------------------------------------------

SUBJECTS = (
    "dog", "cat", "boy", "girl", "man", "woman", "bird",
    "baby", "team", "family", "crowd", "teacher", "horse",
)
OBJECTS = (
    "park", "beach", "cake", "car", "tree", "house", "lake",
    "ball", "river", "garden", "bridge", "church", "mountain",
)
TEMPLATES = (
    "the {s} played near the {o} .",
    "we saw a {s} at the {o} .",
    "my {s} loved the {o} !",
    "there was a {s} by the {o} today .",
    "everyone watched the {s} and the {o} .",
    "it was a {s} with a big {o} .",
)


@dataclass(frozen=True)
class SynthSpec:
    """Shape of a synthetic corpus.

    Each image carries three latent choices (template, subject, object); its
    feature vector is the sum of their embeddings plus Gaussian noise. Stories
    have a protagonist subject that recurs with probability
    ``protagonist_rate`` per image.
    """

    feature_dim: int = 32
    n_images: int = 5
    n_subjects: int = len(SUBJECTS)
    n_objects: int = len(OBJECTS)
    n_templates: int = len(TEMPLATES)
    noise: float = 0.05
    protagonist_rate: float = 0.5

    @property
    def subjects(self) -> tuple[str, ...]:
        return SUBJECTS[: self.n_subjects]

    @property
    def objects(self) -> tuple[str, ...]:
        return OBJECTS[: self.n_objects]

    @property
    def templates(self) -> tuple[str, ...]:
        return TEMPLATES[: self.n_templates]


def synth_embeddings(seed: int, spec: SynthSpec = SynthSpec()) -> dict[str, np.ndarray]:
    """Fixed random unit vectors for every latent item, keyed by name.

    Templates are keyed ``"<template:i>"``. When the items fit in the feature
    dimension the vectors are mutually orthogonal.
    """
    names = (
        [f"<template:{i}>" for i in range(spec.n_templates)]
        + list(spec.subjects)
        + list(spec.objects)
    )
    rng = np.random.default_rng([seed, 0x5EED])
    raw = rng.standard_normal((spec.feature_dim, len(names)))
    if len(names) <= spec.feature_dim:
        q, r = np.linalg.qr(raw)
        vecs = (q * np.sign(np.diag(r))).T
    else:
        vecs = raw.T / np.linalg.norm(raw.T, axis=1, keepdims=True)
    return {name: vecs[i] for i, name in enumerate(names)}


def synth_corpus(
    seed: int, n_stories: int, spec: SynthSpec = SynthSpec()
) -> list[StoryRecord]:
    """Deterministic toy stories whose features determine their sentences."""
    if n_stories < 1:
        raise ValueError("n_stories must be at least 1")
    emb = synth_embeddings(seed, spec)
    rng = np.random.default_rng([seed, 1])
    records = []
    for i in range(n_stories):
        protagonist = spec.subjects[rng.integers(spec.n_subjects)]
        feats, sents = [], []
        for _ in range(spec.n_images):
            t = int(rng.integers(spec.n_templates))
            if rng.random() < spec.protagonist_rate:
                subj = protagonist
            else:
                subj = spec.subjects[rng.integers(spec.n_subjects)]
            obj = spec.objects[rng.integers(spec.n_objects)]
            vec = emb[f"<template:{t}>"] + emb[subj] + emb[obj]
            vec = vec + spec.noise * rng.standard_normal(spec.feature_dim)
            feats.append(vec)
            sents.append(tokenize(spec.templates[t].format(s=subj, o=obj)))
        records.append(StoryRecord(f"synth-{seed}-{i:05d}", np.array(feats), sents))
    return records


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------


def epoch_order(n_records: int, epoch: int, seed: int) -> np.ndarray:
    """Shuffled record indices for one epoch, reproducible from (seed, epoch)."""
    if n_records < 1:
        raise ValueError("need at least one record")
    return np.random.default_rng([seed, epoch]).permutation(n_records)


def make_batches(order: Sequence[int], batch_size: int) -> list[list[int]]:
    """Consecutive slices of ``order``; a trailing singleton joins the previous batch."""
    batches = [list(order[i : i + batch_size]) for i in range(0, len(order), batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2].extend(batches.pop())
    return batches
