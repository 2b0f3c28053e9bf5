"""The full story generator: bi-LSTM encoder, glocal stack, cascading decoder."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .autodiff import RunningStats, Tensor, concat, no_grad
from .data import DataError, StoryRecord, Vocabulary
from .decoder import DecoderConfig, DecoderParams, StoryResult, run_story
from .glocal import (
    EncoderConfig,
    GlocalParams,
    GlocalVector,
    build_glocal,
    build_story_context,
)
from .recurrent import LstmParams, encode_bidirectional


class GlacNet:
    """Parameters plus forward passes for teacher forcing and generation.

    ``encoder`` should already reflect ablation overrides (see
    ``TrainConfig.model_encoder_config``). In ``plain_seq2seq`` mode every
    sentence is conditioned on the same story summary built from the final
    encoder states.
    """

    def __init__(
        self,
        encoder: EncoderConfig,
        decoder: DecoderConfig,
        vocab_size: int,
        plain_seq2seq: bool = False,
        rng: np.random.Generator | None = None,
    ):
        encoder.validate()
        decoder.validate()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.encoder = encoder
        self.decoder = decoder
        self.plain_seq2seq = plain_seq2seq
        self.vocab_size = vocab_size
        d, h, g = encoder.feature_dim, encoder.hidden_size, encoder.glocal_dim
        h_dec = decoder.hidden_size or g
        self.enc_fwd = LstmParams.init(d, h, rng)
        self.enc_bwd = LstmParams.init(d, h, rng)
        in_width = 2 * h if plain_seq2seq else encoder.concat_width
        self.glocal = GlocalParams.init(in_width, g, rng)
        self.dec = DecoderParams.init(vocab_size, decoder.embed_dim, g, h_dec, rng)

    # -- parameter access ---------------------------------------------------

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        out.update({f"enc_fwd.{k}": v for k, v in self.enc_fwd.tensors().items()})
        out.update({f"enc_bwd.{k}": v for k, v in self.enc_bwd.tensors().items()})
        out.update({f"glocal.{k}": v for k, v in self.glocal.tensors().items()})
        out.update({f"dec.{k}": v for k, v in self.dec.tensors().items()})
        return out

    def running_stats(self) -> dict[str, RunningStats]:
        return {"glocal.bn1": self.glocal.bn1_stats, "glocal.bn2": self.glocal.bn2_stats}

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def zero_parameters(self) -> "GlacNet":
        for p in self.parameters().values():
            p.data = np.zeros_like(p.data)
        return self

    # -- forward ------------------------------------------------------------

    def encode(
        self, features: Tensor, training: bool, rng: np.random.Generator | None = None
    ) -> list[GlocalVector]:
        """Glocal vectors for a (batch, S, d) feature tensor."""
        if features.ndim != 3 or features.shape[2] != self.encoder.feature_dim:
            raise DataError(
                f"features of shape {features.shape} do not match feature_dim "
                f"{self.encoder.feature_dim}"
            )
        s = features.shape[1]
        per_image = [features[:, t, :] for t in range(s)]
        global_out = encode_bidirectional(per_image, self.enc_fwd, self.enc_bwd)
        if self.plain_seq2seq:
            h = self.encoder.hidden_size
            summary = concat([global_out[-1][:, :h], global_out[0][:, h:]], axis=1)
            return build_story_context(summary, s, self.glocal, self.encoder, training, rng)
        return build_glocal(per_image, global_out, self.glocal, self.encoder, training, rng)

    def story_loss(
        self,
        features,
        targets: Sequence[Sequence[Sequence[int]]],
        training: bool,
        rng: np.random.Generator | None = None,
        trace: list | None = None,
    ) -> StoryResult:
        """Teacher-forced decode of a batch; ``targets[t][b]`` are token ids."""
        feats = features if isinstance(features, Tensor) else Tensor(features)
        glocals = self.encode(feats, training, rng)
        return run_story(glocals, self.dec, self.decoder, targets=targets, trace=trace)

    def generate(self, features: np.ndarray, sampler, trace: list | None = None) -> list[list[int]]:
        """Sentences (token ids, no ``<end>``) for one story's (S, d) features."""
        with no_grad():
            glocals = self.encode(Tensor(np.asarray(features)[None]), training=False)
            result = run_story(glocals, self.dec, self.decoder, sampler=sampler, trace=trace)
        return result.sentences


def batch_arrays(
    records: Sequence[StoryRecord], vocab: Vocabulary
) -> tuple[np.ndarray, list[list[list[int]]]]:
    """Stack features to (batch, S, d) and encode targets as ``targets[t][b]``."""
    sizes = {r.n_images for r in records}
    if len(sizes) != 1:
        raise DataError(f"stories in one batch must have the same image count, got {sorted(sizes)}")
    feats = np.stack([r.features for r in records])
    s = records[0].n_images
    targets = [[vocab.encode(r.sentences[t]) for r in records] for t in range(s)]
    return feats, targets
