"""Self-describing checkpoint files.

Layout: a magic line, one line of JSON header, then the raw little-endian
float64 payload. The header lists every tensor by name, shape and byte
offset, alongside the vocabulary, the full config, the epoch counter and the
dropout RNG state. Keys are sorted so identical models give identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .config import TrainConfig, from_dict, to_dict
from .data import Vocabulary
from .model import GlacNet

MAGIC = b"GLACNET-CHECKPOINT\n"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model: GlacNet
    vocab: Vocabulary
    config: TrainConfig
    epoch: int = 0
    rng_state: dict[str, Any] | None = None
    metrics: list[dict[str, float]] = field(default_factory=list)


def _arrays(ckpt: Checkpoint) -> list[tuple[str, str, np.ndarray]]:
    out = [("param", name, t.data) for name, t in ckpt.model.parameters().items()]
    for name, stats in ckpt.model.running_stats().items():
        out.append(("stats", f"{name}.mean", stats.mean))
        out.append(("stats", f"{name}.var", stats.var))
    return out


def to_bytes(ckpt: Checkpoint) -> bytes:
    entries, chunks, offset = [], [], 0
    for kind, name, arr in _arrays(ckpt):
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"kind": kind, "name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    header = {
        "format_version": FORMAT_VERSION,
        "vocab": ckpt.vocab.words,
        "min_count": ckpt.vocab.min_count,
        "config": to_dict(ckpt.config),
        "vocab_size": ckpt.model.vocab_size,
        "epoch": ckpt.epoch,
        "rng_state": ckpt.rng_state,
        "metrics": ckpt.metrics,
        "tensors": entries,
        "payload_bytes": offset,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + head + b"\n" + b"".join(chunks)


def from_bytes(blob: bytes) -> Checkpoint:
    if not blob.startswith(MAGIC):
        raise CheckpointError("not a checkpoint file")
    end = blob.index(b"\n", len(MAGIC))
    header = json.loads(blob[len(MAGIC) : end].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header.get('format_version')}")
    payload = blob[end + 1 :]
    if len(payload) != header["payload_bytes"]:
        raise CheckpointError("checkpoint payload is truncated")

    config = from_dict(header["config"])
    vocab = Vocabulary(header["vocab"], min_count=header["min_count"])
    model = GlacNet(
        config.model_encoder_config(),
        config.decoder,
        header["vocab_size"],
        plain_seq2seq=config.plain_seq2seq,
    )
    params = model.parameters()
    stats = model.running_stats()
    seen = set()
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) * 8
        arr = np.frombuffer(payload, dtype="<f8", count=n // 8, offset=entry["offset"])
        arr = arr.reshape(shape).astype(np.float64)
        name = entry["name"]
        if entry["kind"] == "param":
            if name not in params or params[name].shape != shape:
                raise CheckpointError(f"tensor {name} {shape} does not fit the configured model")
            params[name].data = arr
        else:
            owner, _, attr = name.rpartition(".")
            if owner not in stats:
                raise CheckpointError(f"unknown running statistics {name}")
            setattr(stats[owner], attr, arr)
        seen.add(name)
    missing = set(params) - seen
    if missing:
        raise CheckpointError(f"checkpoint lacks tensors {sorted(missing)}")
    return Checkpoint(
        model, vocab, config, header["epoch"], header["rng_state"], header["metrics"]
    )


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(ckpt))


def load_checkpoint(path: str | Path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())
