"""Multi-image story generation with glocal conditioning and context cascading."""

from .autodiff import Tensor, backward, no_grad
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import TrainConfig, ablation_matrix, load_config, parse_config
from .data import (
    StoryRecord,
    SynthSpec,
    Vocabulary,
    build_vocab,
    epoch_order,
    load_corpus,
    save_corpus,
    synth_corpus,
    tokenize,
)
from .model import GlacNet
from .sampler import SamplerConfig, StorySampler, WordCounter, penalize, select_word
from .training import evaluate_perplexity, generate_stories, train

__all__ = [
    "Checkpoint",
    "GlacNet",
    "SamplerConfig",
    "StoryRecord",
    "StorySampler",
    "SynthSpec",
    "Tensor",
    "TrainConfig",
    "Vocabulary",
    "WordCounter",
    "ablation_matrix",
    "backward",
    "build_vocab",
    "epoch_order",
    "evaluate_perplexity",
    "generate_stories",
    "load_checkpoint",
    "load_config",
    "load_corpus",
    "no_grad",
    "parse_config",
    "penalize",
    "save_checkpoint",
    "save_corpus",
    "select_word",
    "synth_corpus",
    "tokenize",
    "train",
]
