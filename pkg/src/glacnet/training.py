"""Training loop, perplexity, and story generation from checkpoints."""

from __future__ import annotations

import logging
import math
from typing import Callable, Sequence

import numpy as np

from .autodiff import ContractError, Tensor, backward, mul, no_grad
from .checkpoint import Checkpoint
from .config import TrainConfig
from .data import (
    DataError,
    StoryRecord,
    Vocabulary,
    build_vocab,
    epoch_order,
    make_batches,
)
from .model import GlacNet, batch_arrays
from .optim import Adam, AdamConfig, clip_global_norm
from .sampler import (
    SamplerConfig,
    StorySampler,
    default_function_words,
    read_word_list,
)

logger = logging.getLogger(__name__)

EpochHook = Callable[[int, dict[str, float], Checkpoint], bool]


def new_model(config: TrainConfig, vocab_size: int) -> GlacNet:
    config.decoder.vocab_size = vocab_size
    return GlacNet(
        config.model_encoder_config(),
        config.decoder,
        vocab_size,
        plain_seq2seq=config.plain_seq2seq,
        rng=np.random.default_rng([config.seed, 0]),
    )


def _groups_by_length(records: Sequence[StoryRecord]) -> list[list[int]]:
    groups: dict[int, list[int]] = {}
    for i, r in enumerate(records):
        groups.setdefault(r.n_images, []).append(i)
    return [groups[k] for k in sorted(groups)]


def train(
    records: Sequence[StoryRecord],
    config: TrainConfig,
    valid: Sequence[StoryRecord] | None = None,
    vocab: Vocabulary | None = None,
    on_epoch: EpochHook | None = None,
) -> Checkpoint:
    """Teacher-forced Adam training; returns the final checkpoint.

    Each epoch reshuffles the records, splits them into batches of
    ``config.batch_size`` stories (a trailing single story joins the previous
    batch), and takes one optimizer step per batch on the token-mean loss.
    With ``valid`` records, validation perplexity is logged each epoch and
    training stops after ``config.patience`` epochs without improvement.
    ``on_epoch`` may return True to stop early.
    """
    config.validate()
    if not records:
        raise DataError("cannot train on an empty corpus")
    dims = {r.feature_dim for r in records}
    if dims != {config.encoder.feature_dim}:
        raise DataError(f"corpus feature dims {sorted(dims)} != encoder.feature_dim "
                        f"{config.encoder.feature_dim}")
    if len({r.n_images for r in records}) != 1:
        raise DataError("all training stories must have the same number of images")
    if len(records) * records[0].n_images < 2:
        # batch norm over stories x sentences needs two rows
        raise DataError("training needs at least two images in total")

    vocab = vocab if vocab is not None else build_vocab(records, config.min_count)
    model = new_model(config, len(vocab))
    params = model.parameters()
    opt = Adam(params, AdamConfig(config.learning_rate, config.weight_decay))
    drop_rng = np.random.default_rng([config.seed, 2])
    ckpt = Checkpoint(model, vocab, config)

    best, stale = math.inf, 0
    for epoch in range(config.epochs):
        order = epoch_order(len(records), epoch, config.seed)
        total_nll, total_tokens = 0.0, 0
        for batch_idx in make_batches(order, config.batch_size):
            feats, targets = batch_arrays([records[i] for i in batch_idx], vocab)
            model.zero_grad()
            result = model.story_loss(feats, targets, training=True, rng=drop_rng)
            n_tok = result.token_count
            loss = mul(result.total_loss, Tensor(1.0 / n_tok))
            backward(loss)
            grads = {k: p.grad for k, p in params.items() if p.grad is not None}
            clip_global_norm(grads, config.clip_norm)
            opt.step(grads)
            total_nll += float(result.total_loss.data)
            total_tokens += n_tok

        metrics = {"epoch": epoch + 1, "train_loss": total_nll / total_tokens}
        if valid:
            metrics["valid_perplexity"] = evaluate_perplexity(model, vocab, valid)
        ckpt.epoch = epoch + 1
        ckpt.rng_state = drop_rng.bit_generator.state
        ckpt.metrics.append(metrics)
        logger.info("epoch %d: %s", epoch + 1, metrics)

        if on_epoch is not None and on_epoch(epoch + 1, metrics, ckpt):
            break
        if valid:
            if metrics["valid_perplexity"] < best:
                best, stale = metrics["valid_perplexity"], 0
            else:
                stale += 1
                if stale >= config.patience:
                    logger.info("early stop after %d stale epochs", stale)
                    break
    if ckpt.rng_state is None:
        ckpt.rng_state = drop_rng.bit_generator.state
    return ckpt


def story_nll(model: GlacNet, vocab: Vocabulary, records: Sequence[StoryRecord],
              batch_size: int = 64) -> tuple[float, int]:
    """Summed inference-mode negative log-likelihood and scored-token count."""
    total, count = 0.0, 0
    with no_grad():
        for group in _groups_by_length(records):
            for start in range(0, len(group), batch_size):
                batch = [records[i] for i in group[start : start + batch_size]]
                feats, targets = batch_arrays(batch, vocab)
                result = model.story_loss(feats, targets, training=False)
                total += float(result.total_loss.data)
                count += result.token_count
    return total, count


def evaluate_perplexity(model: GlacNet, vocab: Vocabulary, records: Sequence[StoryRecord]) -> float:
    """``exp`` of the token-mean negative log-likelihood, no count penalty."""
    if not records:
        raise ContractError("perplexity needs at least one record")
    total, count = story_nll(model, vocab, records)
    return math.exp(total / count)


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


def exempt_ids(vocab: Vocabulary, exempt_file: str = "") -> frozenset[int]:
    words = read_word_list(exempt_file) if exempt_file else default_function_words()
    return frozenset(vocab.ids_for(words))


def make_sampler(
    ckpt: Checkpoint,
    seed: int | None = None,
    k: float | None = None,
    n_samples: int | None = None,
    greedy: bool = False,
    use_penalty: bool | None = None,
) -> StorySampler:
    s = ckpt.config.sampler
    cfg = SamplerConfig(
        k=s.k if k is None else k,
        n_samples=s.n_samples if n_samples is None else n_samples,
        exempt=exempt_ids(ckpt.vocab, s.exempt_file),
        seed=s.seed if seed is None else seed,
        reset_per_sentence=s.reset_per_sentence,
    )
    if use_penalty is None:
        use_penalty = ckpt.config.use_count_penalty
    return StorySampler(cfg, use_penalty=use_penalty, greedy=greedy)


def generate_stories(
    ckpt: Checkpoint,
    features: Sequence[tuple[str, np.ndarray]],
    sampler: StorySampler,
    trace: list | None = None,
) -> list[tuple[str, list[list[str]]]]:
    """Generated sentences (as words) for each ``(story_id, (S, d) features)``."""
    d = ckpt.model.encoder.feature_dim
    out = []
    for story_id, feats in features:
        feats = np.asarray(feats, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[1] != d:
            raise DataError(f"story {story_id}: features {feats.shape} do not match dim {d}")
        ids = ckpt.model.generate(feats, sampler, trace)
        out.append((story_id, [ckpt.vocab.decode(s) for s in ids]))
    return out


def format_stories(stories: Sequence[tuple[str, list[list[str]]]]) -> str:
    """One line per story: the id, then each sentence, tab separated."""
    return "".join(
        "\t".join([sid] + [" ".join(s) for s in sents]) + "\n" for sid, sents in stories
    )


def repetition_rate(sentences: Sequence[Sequence[int]], exempt: frozenset[int]) -> float:
    """Share of a story's non-exempt tokens that repeat an earlier one in the story."""
    seen: set[int] = set()
    repeats = total = 0
    for sent in sentences:
        for tok in sent:
            if tok in exempt:
                continue
            total += 1
            if tok in seen:
                repeats += 1
            seen.add(tok)
    return repeats / total if total else 0.0
