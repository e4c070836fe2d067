"""Command-line interface: train, segment, eval, bench, synth.

Option precedence is built-in defaults < JSON config file < flags.
Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from statistics import median

import numpy as np

from . import synthetic
from .config import TrainConfig
from .corpus import (Sentence, build_vocab, load_contextual_reps, load_corpus,
                     load_word_embeddings, make_batches, write_corpus)
from .errors import ConfigError, EdusegError, ParseError, ValidationError
from .evaluator import evaluate_corpus, predict_corpus
from .persistence import build_model, load_checkpoint, save_checkpoint
from .trainer import train

_HYPER_KEYS = set(TrainConfig.__dataclass_fields__)
_PATH_KEYS = {"corpus", "val_corpus", "embeddings", "reps", "val_reps",
              "checkpoint", "output", "log", "batch_sizes", "repetitions",
              "workers", "max_len"}


def _load_config_file(path) -> dict:
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    unknown = set(data) - _HYPER_KEYS - _PATH_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return data


def _merge_config(args) -> dict:
    merged: dict = {}
    if getattr(args, "config", None):
        merged.update(_load_config_file(args.config))
    for key in _HYPER_KEYS | _PATH_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return merged


def _train_config(merged: dict) -> TrainConfig:
    hyper = {k: v for k, v in merged.items() if k in _HYPER_KEYS}
    if hyper.get("window") in ("inf", "unbounded"):
        hyper["window"] = None
    return TrainConfig(**hyper)


def _require(merged: dict, key: str) -> str:
    if key not in merged or merged[key] is None:
        raise ConfigError(f"missing required option --{key.replace('_', '-')}")
    return merged[key]


def _require_file(merged: dict, key: str) -> str:
    path = _require(merged, key)
    if not os.path.exists(path):
        raise ConfigError(f"{key.replace('_', '-')} path does not exist: {path}")
    return path


def _add_common_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)


def _add_hyper_flags(p: argparse.ArgumentParser):
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--l2-weight", dest="l2_weight", type=float)
    p.add_argument("--clip-norm", dest="clip_norm", type=float)
    p.add_argument("--ema-decay", dest="ema_decay", type=float)
    p.add_argument("--window", help="attention window size, or 'inf'")
    p.add_argument("--hidden", type=int)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--use-elmo", dest="use_elmo", action="store_true", default=None)
    p.add_argument("--no-elmo", dest="use_elmo", action="store_false")
    p.add_argument("--use-attention", dest="use_attention", action="store_true",
                   default=None)
    p.add_argument("--no-attention", dest="use_attention", action="store_false")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eduseg",
                                     description="Neural discourse segmenter")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model")
    _add_common_flags(p)
    _add_hyper_flags(p)
    p.add_argument("--corpus")
    p.add_argument("--val-corpus", dest="val_corpus")
    p.add_argument("--embeddings")
    p.add_argument("--reps")
    p.add_argument("--val-reps", dest="val_reps")
    p.add_argument("--output", help="checkpoint output path")
    p.add_argument("--log", help="per-epoch JSON-lines metrics log")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("segment", help="label a corpus with a trained model")
    _add_common_flags(p)
    p.add_argument("--checkpoint")
    p.add_argument("--corpus", help="input corpus or raw one-token-per-line file")
    p.add_argument("--reps")
    p.add_argument("--output")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("eval", help="score a model against gold labels")
    _add_common_flags(p)
    p.add_argument("--checkpoint")
    p.add_argument("--corpus")
    p.add_argument("--reps")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="throughput across batch sizes")
    _add_common_flags(p)
    p.add_argument("--checkpoint")
    p.add_argument("--corpus")
    p.add_argument("--reps")
    p.add_argument("--batch-sizes", dest="batch_sizes",
                   help="comma-separated, e.g. 1,32")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--output", help="JSON sidecar with raw samples")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="generate a synthetic corpus + fixtures")
    p.add_argument("--task", choices=["rule", "longrange"], default="rule")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--train-size", type=int, default=300)
    p.add_argument("--val-size", type=int, default=50)
    p.add_argument("--test-size", type=int, default=50)
    p.add_argument("--embedding-dim", type=int, default=50)
    p.add_argument("--rep-dim", type=int, default=0,
                   help="also write REP1 files with this dimension")
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_synth)
    return parser


def cmd_train(args) -> int:
    merged = _merge_config(args)
    config = _train_config(merged)
    corpus_path = _require_file(merged, "corpus")
    emb_path = _require_file(merged, "embeddings")
    sentences = load_corpus(corpus_path)
    vocab = build_vocab(sentences)
    embedding = load_word_embeddings(emb_path, vocab)
    reps = val_reps = None
    if config.use_elmo:
        reps = load_contextual_reps(_require_file(merged, "reps"), sentences)
    val_sents: list[Sentence] = []
    if merged.get("val_corpus"):
        val_sents = load_corpus(merged["val_corpus"])
        if config.use_elmo:
            val_reps = load_contextual_reps(_require_file(merged, "val_reps"), val_sents)
    out_path = _require(merged, "output")
    ckpt, history = train(config, sentences, val_sents, vocab, embedding,
                          reps, val_reps, log_path=merged.get("log"))
    save_checkpoint(ckpt, out_path)
    if history:
        last = history[-1]
        best = max((h.val_f1 for h in history), default=float("nan"))
        print(f"trained {len(history)} epochs; best val F1 {best:.4f}; "
              f"checkpoint -> {out_path}")
        _ = last
    return 0


def _load_tokens_or_corpus(path) -> tuple[list[Sentence], bool]:
    """Corpus files keep their labels; raw files get all-zero labels."""
    try:
        return load_corpus(path), True
    except (ParseError, ValidationError):
        sentences = []
        tokens: list[str] = []
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line:
                    if tokens:
                        sentences.append(Sentence(tokens, [0] * len(tokens)))
                        tokens = []
                    continue
                tokens.append(line.split("\t")[0])
        if tokens:
            sentences.append(Sentence(tokens, [0] * len(tokens)))
        return sentences, False


def cmd_segment(args) -> int:
    merged = _merge_config(args)
    ckpt = load_checkpoint(_require_file(merged, "checkpoint"))
    model = build_model(ckpt)
    in_path = _require_file(merged, "corpus")
    out_path = _require(merged, "output")
    if os.path.getsize(in_path) == 0:
        open(out_path, "w").close()
        return 0
    sentences, _ = _load_tokens_or_corpus(in_path)
    reps = None
    if model.config.use_elmo:
        reps = load_contextual_reps(_require_file(merged, "reps"), sentences)
    preds = predict_corpus(model, sentences, reps,
                           batch_size=model.config.batch_size,
                           workers=merged.get("workers", 1))
    labeled = []
    for sent, labels in zip(sentences, preds):
        labels = list(labels)
        labels[0] = 0  # output stays a valid corpus file
        labeled.append(Sentence(sent.tokens, labels))
    write_corpus(labeled, out_path)
    return 0


def cmd_eval(args) -> int:
    merged = _merge_config(args)
    ckpt = load_checkpoint(_require_file(merged, "checkpoint"))
    model = build_model(ckpt)
    sentences = load_corpus(_require_file(merged, "corpus"))
    reps = None
    if model.config.use_elmo:
        reps = load_contextual_reps(_require_file(merged, "reps"), sentences)
    metrics = evaluate_corpus(model, sentences, reps, model.config.batch_size)
    print(json.dumps(metrics.to_dict()))
    return 0


def cmd_bench(args) -> int:
    merged = _merge_config(args)
    ckpt = load_checkpoint(_require_file(merged, "checkpoint"))
    model = build_model(ckpt)
    sentences = load_corpus(_require_file(merged, "corpus"))
    reps = None
    if model.config.use_elmo:
        reps = load_contextual_reps(_require_file(merged, "reps"), sentences)
    raw_sizes = merged.get("batch_sizes", "1,32")
    if isinstance(raw_sizes, str):
        sizes = [int(s) for s in raw_sizes.split(",")]
    else:
        sizes = [int(s) for s in raw_sizes]
    repetitions = int(merged.get("repetitions", 3))

    def decode_all(batch_size: int) -> list[list[int]]:
        preds = []
        for batch in make_batches(sentences, reps, batch_size, model.vocab):
            preds.extend(model.decode(batch))
        return preds

    reference = decode_all(1)
    report = []
    sidecar = []
    base_speed = None
    for size in sizes:
        # correctness gate: refuse to time configurations that decode differently
        if decode_all(size) != reference:
            print(f"batch size {size}: decoded labels differ from batch size 1; "
                  "refusing to report timings", file=sys.stderr)
            return 1
        samples = []
        for _ in range(repetitions):
            started = time.perf_counter()
            decode_all(size)
            samples.append(len(sentences) / (time.perf_counter() - started))
        speed = median(samples)
        if base_speed is None:
            base_speed = speed
        report.append((size, speed, speed / base_speed))
        sidecar.append({"batch_size": size, "samples": samples,
                        "median_sents_per_s": speed})
    print(f"{'Batch':>6} {'Sents/s':>10} {'Speedup':>8}")
    for size, speed, ratio in report:
        print(f"{size:>6} {speed:>10.2f} {ratio:>7.1f}x")
    if merged.get("output"):
        with open(merged["output"], "w", encoding="utf-8") as f:
            json.dump(sidecar, f, indent=2)
    return 0


def cmd_synth(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    gen = (synthetic.generate_rule_corpus if args.task == "rule"
           else synthetic.generate_longrange_corpus)
    splits = {"train": args.train_size, "val": args.val_size, "test": args.test_size}
    all_tokens: set[str] = set()
    for i, (name, size) in enumerate(splits.items()):
        sentences = gen(size, seed=args.seed + i)
        write_corpus(sentences, os.path.join(args.out_dir, f"{name}.txt"))
        all_tokens.update(t for s in sentences for t in s.tokens)
        if args.rep_dim > 0:
            synthetic.write_random_reps(sentences, args.rep_dim, args.seed + 50 + i,
                                        os.path.join(args.out_dir, f"{name}.rep1"))
    synthetic.write_embedding_file(sorted(all_tokens), args.embedding_dim,
                                   args.seed + 99,
                                   os.path.join(args.out_dir, "embeddings.txt"))
    print(f"wrote {', '.join(splits)} corpora to {args.out_dir}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except EdusegError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
