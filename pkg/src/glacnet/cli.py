"""Command-line entry point: ``glacnet {train,eval,generate,gradcheck,ablations}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import TrainConfig, load_config, write_ablations
from .data import DataError, load_corpus
from .glocal import ConfigError
from .gradcheck import check_model_gradients
from .training import evaluate_perplexity, format_stories, generate_stories, make_sampler, train


def _cmd_train(args) -> int:
    cfg = load_config(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    records = load_corpus(args.corpus)
    valid = load_corpus(args.valid) if args.valid else None
    ckpt = train(records, cfg, valid=valid)
    save_checkpoint(ckpt, args.out)
    for m in ckpt.metrics:
        print(" ".join(f"{k}={v}" for k, v in m.items()))
    return 0


def _cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    records = load_corpus(args.corpus)
    print(f"perplexity={evaluate_perplexity(ckpt.model, ckpt.vocab, records)!r}")
    return 0


def _read_features(path: str) -> list[tuple[str, np.ndarray]]:
    """Feature-only stories: corpus lines whose ``sentences`` may be absent."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out.append((str(obj["story_id"]), np.array(obj["features"], dtype=np.float64)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"line {line_no}: bad feature record ({exc})") from None
    return out


def _cmd_generate(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    sampler = make_sampler(
        ckpt, seed=args.seed, k=args.k, n_samples=args.n_samples, greedy=args.greedy,
        use_penalty=False if args.no_count else None,
    )
    stories = generate_stories(ckpt, _read_features(args.features), sampler)
    sys.stdout.write(format_stories(stories))
    return 0


def _cmd_gradcheck(args) -> int:
    if args.dims != "tiny":
        raise ConfigError(f"unknown gradcheck dims {args.dims!r}")
    report = check_model_gradients(seed=args.seed)
    status = "ok" if report.ok else "FAILED"
    print(f"gradcheck {status}: worst relative error {report.max_error:.3e} "
          f"({report.worst_name}), tolerance {report.tolerance:g}")
    return 0 if report.ok else 1


def _cmd_ablations(args) -> int:
    cfg = load_config(args.config) if args.config else TrainConfig()
    for path in write_ablations(cfg, args.out_dir):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glacnet", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--valid", help="validation corpus for early stopping")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="print perplexity of a corpus under a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("generate", help="write one generated story per feature record")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--greedy", action="store_true", help="argmax instead of sample-and-vote")
    p.add_argument("--k", type=float, help="repetition penalty sensitivity")
    p.add_argument("--n-samples", type=int, help="draws per word vote")
    p.add_argument("--seed", type=int)
    p.add_argument("--no-count", action="store_true", help="disable the repetition penalty")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    p.add_argument("--dims", default="tiny", choices=["tiny"])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("ablations", help="write the six ablation configs")
    p.add_argument("--config")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_ablations)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (DataError, ConfigError, CheckpointError, OSError) as exc:
        print(f"glacnet: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
