"""Training configuration, its ``key = value`` file format, and ablation variants.

Top-level keys set :class:`TrainConfig` fields. Nested settings use a
section prefix: ``encoder.glocal_dim = 64``, ``decoder.cascading = false``,
``sampler.k = 0.3``. Unknown keys are rejected.
"""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .decoder import DecoderConfig
from .glocal import ConfigError, EncoderConfig


@dataclass
class SamplerSettings:
    """Sampler options that do not depend on the vocabulary."""

    k: float = 0.3
    n_samples: int = 100
    seed: int = 0
    reset_per_sentence: bool = False
    exempt_file: str = ""  # empty: shipped function-word list


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    batch_size: int = 64
    epochs: int = 20
    seed: int = 0
    min_count: int = 1
    clip_norm: float = 5.0
    patience: int = 5
    cascading: bool = True
    use_global: bool = True
    use_local: bool = True
    use_count_penalty: bool = True
    plain_seq2seq: bool = False
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    sampler: SamplerSettings = field(default_factory=SamplerSettings)

    # The ablation flags live at top level; the nested configs carry copies.
    def __post_init__(self):
        self.sync()

    def sync(self) -> "TrainConfig":
        self.encoder.use_global = self.use_global
        self.encoder.use_local = self.use_local
        self.decoder.cascading = self.cascading
        return self

    def model_encoder_config(self) -> EncoderConfig:
        """Encoder settings the model actually uses.

        Plain seq2seq mode conditions on the encoder summary alone, whatever
        the glocal flags say.
        """
        enc = dataclasses.replace(self.encoder)
        if self.plain_seq2seq:
            enc.use_global, enc.use_local = True, False
        return enc

    def validate(self) -> None:
        self.sync()
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate and weight_decay must be non-negative")
        if self.batch_size < 1 or self.epochs < 0 or self.min_count < 1:
            raise ConfigError("batch_size and min_count must be positive, epochs non-negative")
        if self.patience < 0:
            raise ConfigError("patience must be non-negative")
        if self.sampler.k < 0 or self.sampler.n_samples < 1:
            raise ConfigError("sampler.k must be >= 0 and sampler.n_samples >= 1")
        self.model_encoder_config().validate()
        if not self.plain_seq2seq:
            self.encoder.validate()
        self.decoder.validate()


_SECTIONS = ("encoder", "decoder", "sampler")


def _flatten(cfg: TrainConfig) -> dict[str, Any]:
    cfg.sync()
    out: dict[str, Any] = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if f.name in _SECTIONS:
            for sub in dataclasses.fields(value):
                key = f"{f.name}.{sub.name}"
                if key in _MIRRORED:
                    continue
                out[key] = getattr(value, sub.name)
        else:
            out[f.name] = value
    return out


def to_dict(cfg: TrainConfig) -> dict[str, Any]:
    return _flatten(cfg)


_MIRRORED = ("encoder.use_global", "encoder.use_local", "decoder.cascading")


def _field_type(cfg: TrainConfig, key: str):
    if key in _MIRRORED:
        return None, None
    section, _, name = key.rpartition(".")
    owner = getattr(cfg, section) if section else cfg
    if section and section not in _SECTIONS:
        return None, None
    types = {f.name: f.type for f in dataclasses.fields(owner)}
    if name not in types or (not section and name in _SECTIONS):
        return None, None
    return owner, name


def _coerce(raw: str, key: str, annotation: str):
    text = raw.strip()
    kind = annotation.replace(" ", "")
    if kind.endswith("|None"):
        if text.lower() in ("none", ""):
            return None
        kind = kind[: -len("|None")]
    try:
        if kind == "bool":
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None
    return text


def from_dict(values: dict[str, Any], base: TrainConfig | None = None) -> TrainConfig:
    cfg = copy.deepcopy(base) if base is not None else TrainConfig()
    for key, value in values.items():
        owner, name = _field_type(cfg, key)
        if owner is None:
            raise ConfigError(f"unknown config key {key!r}")
        ann = {f.name: f.type for f in dataclasses.fields(owner)}[name]
        if isinstance(value, str):
            value = _coerce(value, key, str(ann))
        setattr(owner, name, value)
    return cfg.sync()


def parse_config(text: str, base: TrainConfig | None = None) -> TrainConfig:
    values: dict[str, str] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {line_no}: duplicate key {key!r}")
        values[key] = value
    return from_dict(values, base)


def load_config(path: str | Path) -> TrainConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def format_config(cfg: TrainConfig) -> str:
    lines = []
    for key, value in _flatten(cfg).items():
        if isinstance(value, bool):
            value = str(value).lower()
        elif value is None:
            value = "none"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def save_config(cfg: TrainConfig, path: str | Path) -> None:
    Path(path).write_text(format_config(cfg), encoding="utf-8")


# ---------------------------------------------------------------------------
# ablations
# ---------------------------------------------------------------------------

ABLATION_FLAGS = ("cascading", "use_global", "use_local", "use_count_penalty", "plain_seq2seq")

# name -> flag overrides relative to the full model
ABLATIONS: dict[str, dict[str, bool]] = {
    "lstm_seq2seq": {"plain_seq2seq": True},
    "no_cascading": {"cascading": False},
    "no_global": {"use_global": False},
    "no_local": {"use_local": False},
    "no_count": {"use_count_penalty": False},
    "full": {},
}

FULL_FLAGS = {
    "cascading": True,
    "use_global": True,
    "use_local": True,
    "use_count_penalty": True,
    "plain_seq2seq": False,
}


def ablation_matrix(base: TrainConfig) -> dict[str, TrainConfig]:
    """The six model variants, each the full model with its own flags flipped."""
    base.validate()
    out = {}
    for name, overrides in ABLATIONS.items():
        cfg = copy.deepcopy(base)
        for flag, value in {**FULL_FLAGS, **overrides}.items():
            setattr(cfg, flag, value)
        out[name] = cfg.sync()
    return out


def write_ablations(base: TrainConfig, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, cfg in ablation_matrix(base).items():
        path = out_dir / f"{name}.cfg"
        save_config(cfg, path)
        paths.append(path)
    return paths
