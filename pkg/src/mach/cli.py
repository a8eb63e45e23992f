"""Command-line interface: plan, train, predict, evaluate, sketch.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 I/O or
model-format error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from contextlib import contextmanager

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from .core import MULTICLASS, MULTILABEL, MachConfig, train
from .dataio import load_dataset, load_eval_file, load_model, save_model
from .decoder import Estimator, score_batch, top_k
from .errors import ConfigError, FormatError, ValidationError
from .hashing import feature_hash
from .metrics import evaluate
from .planner import plan, required_r
from .sketch import TOKEN_DOMAIN, CountMinSketch, token_id

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _non_negative(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def _probability(text):
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"delta must lie in (0, 1), got {text}")
    return value


def _k_list(text):
    try:
        ks = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed k list {text!r}") from None
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("k values must be positive integers")
    return ks


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mach", description="Merged-Average Classifiers via Hashing")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("plan", help="required repetitions and cost for K classes")
    p.add_argument("--classes", "-K", type=int, required=True)
    p.add_argument("--buckets", type=int, help="bucket count (default: sweep powers of two)")
    p.add_argument("--delta", type=_probability, default=0.01)
    p.add_argument("--dim", type=_positive, default=1, help="input dimension d")
    p.add_argument("--hidden", type=_non_negative, default=0)
    p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("train", help="train a model and write the model file")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True, help="output model path")
    p.add_argument("--buckets", type=int, default=32)
    p.add_argument("--reps", type=_positive, help="repetitions (default: from --delta)")
    p.add_argument("--delta", type=_probability, default=0.05)
    p.add_argument("--seed", type=_non_negative, default=0)
    p.add_argument("--mode", choices=(MULTICLASS, MULTILABEL),
                   help="default: multilabel if any sample has several labels")
    p.add_argument("--hidden", type=_non_negative, default=0)
    p.add_argument("--epochs", type=_non_negative, default=10)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch", type=_positive, default=64)
    p.add_argument("--threads", type=_positive, default=os.cpu_count() or 1)
    p.add_argument("--feature-hash-dim", type=_positive)
    p.add_argument("--one-based", action="store_true")
    p.add_argument("--log", help="training log path (default: stderr)")

    p = sub.add_parser("predict", help="top-k classes for every sample")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--topk", type=_positive, default=5)
    p.add_argument("--estimator", choices=[e.value for e in Estimator], default="unbiased")
    p.add_argument("--threads", type=_positive, default=os.cpu_count() or 1)
    p.add_argument("--one-based", action="store_true")
    p.add_argument("--output", help="default: stdout")

    p = sub.add_parser("evaluate", help="matching and ranking metrics against an eval file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="query features, one sample per eval line")
    p.add_argument("--eval", required=True)
    p.add_argument("--k", type=_k_list, default=[1, 5, 10, 100])
    p.add_argument("--estimator", choices=[e.value for e in Estimator], default="unbiased")
    p.add_argument("--map-normalizer", choices=("min", "k"), default="min")
    p.add_argument("--log-base", choices=("2", "e"), default="2")
    p.add_argument("--threads", type=_positive, default=os.cpu_count() or 1)
    p.add_argument("--one-based", action="store_true")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--output", help="default: stdout")

    p = sub.add_parser("sketch", help="count-min sketch over a whitespace token stream")
    p.add_argument("queries", nargs="*", help="tokens to estimate")
    p.add_argument("--input", default="-", help="token file (default: stdin)")
    p.add_argument("--buckets", type=int, default=32)
    p.add_argument("--reps", type=_positive, default=4)
    p.add_argument("--seed", type=_non_negative, default=0)
    p.add_argument("--top", type=_non_negative, default=0, help="also list N heaviest tokens")
    p.add_argument("--format", choices=("text", "json"), default="text")
    return parser


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8") as fh:
            yield fh


def _fmt(x):
    return f"{x:.6g}"


def cmd_plan(args, out):
    k = args.classes
    if k < 2:
        raise UsageError("--classes must be >= 2")
    if args.buckets is not None:
        if args.buckets < 2:
            raise UsageError("--buckets must be >= 2")
        sweep = [args.buckets]
    else:
        sweep, b = [], 2
        while b <= max(2, min(k, 1 << 16)):
            sweep.append(b)
            b *= 2
    records = [plan(k, b, args.delta, args.dim, args.hidden) for b in sweep]
    if args.format == "json":
        json.dump(records, out, indent=2)
        out.write("\n")
        return
    out.write(f"K={k} delta={args.delta} d={args.dim} hidden={args.hidden}\n")
    cols = ["B", "R", "any_pair_bound", "parameters", "inference_multiplications",
            "model_bytes", "last_layer_reduction", "parameter_reduction"]
    out.write("\t".join(cols) + "\n")
    for rec in records:
        out.write("\t".join(_fmt(rec[c]) if isinstance(rec[c], float) else str(rec[c])
                            for c in cols) + "\n")


def _load_inputs(model, path, one_based):
    cfg = model.config
    expect = cfg.raw_dim or cfg.input_dim
    ds = load_dataset(path, expect_dim=expect, one_based=one_based, require_labels=False)
    features = [s.features for s in ds.samples]
    if cfg.raw_dim:
        features = [feature_hash(x, cfg.input_dim, cfg.master_seed) for x in features]
    return features


def _scores(model, features, est, threads, chunk=256):
    chunks = [features[i:i + chunk] for i in range(0, len(features), chunk)]
    parts = Parallel(n_jobs=threads, prefer="threads")(
        delayed(score_batch)(model, c, est) for c in chunks)
    if not parts:
        return np.zeros((0, model.config.num_classes))
    return np.vstack(parts)


def cmd_train(args, out):
    if args.buckets < 2:
        raise UsageError("--buckets must be >= 2")
    if not (args.lr > 0 and math.isfinite(args.lr)):
        raise UsageError("--lr must be positive")
    ds = load_dataset(args.data, one_based=args.one_based)
    samples, dim, raw_dim = ds.samples, ds.num_features, 0
    if args.feature_hash_dim:
        raw_dim, dim = ds.num_features, args.feature_hash_dim
        samples = [type(s)(feature_hash(s.features, dim, args.seed), s.labels) for s in samples]
    mode = args.mode
    if mode is None:
        mode = MULTILABEL if any(len(s.labels) > 1 for s in samples) else MULTICLASS
    reps = args.reps
    if reps is None:
        reps = required_r(max(2, ds.num_labels), args.buckets, args.delta)
    config = MachConfig(ds.num_labels, args.buckets, reps, dim, mode, args.hidden, args.seed,
                        args.epochs, args.lr, args.batch, raw_dim)
    model = train(samples, config, n_jobs=args.threads)
    log = open(args.log, "w", encoding="utf-8") if args.log else sys.stderr
    try:
        for j, losses in enumerate(model.history):
            for e, loss in enumerate(losses, start=1):
                log.write(f"rep={j} epoch={e} loss={loss:.6f}\n")
    finally:
        if args.log:
            log.close()
    save_model(model, args.model)
    out.write(json.dumps({"model": args.model, "K": config.num_classes, "B": config.buckets,
                          "R": config.repetitions, "d": config.input_dim, "mode": mode,
                          "parameters": model.num_parameters}) + "\n")


def cmd_predict(args, out):
    model = load_model(args.model)
    if args.topk > model.config.num_classes:
        raise UsageError(f"--topk {args.topk} exceeds the {model.config.num_classes} classes")
    features = _load_inputs(model, args.data, args.one_based)
    scores = _scores(model, features, Estimator(args.estimator), args.threads)
    for i, row in enumerate(scores):
        ranked = top_k(row, args.topk)
        out.write(f"{i}: " + ",".join(f"{c}:{_fmt(s)}" for c, s in ranked) + "\n")


def _rank(row, query, depth):
    if query.candidates is not None:
        cand = np.array(sorted(query.candidates), dtype=np.int64)
        order = np.lexsort((cand, -row[cand]))
        return cand[order].tolist()
    return [c for c, _ in top_k(row, depth)]


def cmd_evaluate(args, out):
    model = load_model(args.model)
    k_classes = model.config.num_classes
    queries = load_eval_file(args.eval, one_based=args.one_based)
    for q in queries:
        ids = set(q.relevant) | set(q.candidates or ())
        if max(ids) >= k_classes:
            raise ValidationError(
                f"query {q.query_id}: item id {max(ids)} outside the model's {k_classes} classes")
    features = _load_inputs(model, args.data, args.one_based)
    if len(features) != len(queries):
        raise ValidationError(f"{len(features)} data samples for {len(queries)} eval queries")
    scores = _scores(model, features, Estimator(args.estimator), args.threads)
    depth = min(max(args.k), k_classes)
    rankings = [_rank(row, q, depth) for row, q in zip(scores, queries)]
    log_base = math.e if args.log_base == "e" else 2.0
    report = evaluate(rankings, queries, args.k, args.map_normalizer, log_base)
    if args.format == "json":
        json.dump(report, out, indent=2)
        out.write("\n")
        return
    out.write("metric\tk\tweighted\tunweighted\n")
    for rec in report:
        out.write(f"{rec['metric']}\t{rec['k']}\t{_fmt(rec['weighted'])}\t"
                  f"{_fmt(rec['unweighted'])}\n")


def cmd_sketch(args, out):
    if args.buckets < 2:
        raise UsageError("--buckets must be >= 2")
    sketch = CountMinSketch.new(args.buckets, args.reps, args.seed, TOKEN_DOMAIN)
    seen = {}
    fh = sys.stdin if args.input == "-" else open(args.input, encoding="utf-8")
    try:
        for line in fh:
            for tok in line.split():
                tid = token_id(tok)
                sketch.update(tid)
                if args.top:
                    seen.setdefault(tid, tok)
    finally:
        if fh is not sys.stdin:
            fh.close()
    estimates = [{"token": t, "estimate": sketch.estimate(token_id(t))} for t in args.queries]
    heavy = [{"token": seen[i], "estimate": e}
             for i, e in sketch.heavy_hitters(seen, args.top)] if args.top and seen else []
    if args.format == "json":
        json.dump({"total": sketch.total, "estimates": estimates, "heavy_hitters": heavy},
                  out, indent=2)
        out.write("\n")
        return
    out.write(f"total\t{sketch.total}\n")
    for rec in estimates:
        out.write(f"{rec['token']}\t{rec['estimate']}\n")
    for rec in heavy:
        out.write(f"heavy\t{rec['token']}\t{rec['estimate']}\n")


COMMANDS = {
    "plan": cmd_plan,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "sketch": cmd_sketch,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits on --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        with _output(getattr(args, "output", None)) as out:
            COMMANDS[args.command](args, out)
    except (UsageError, ConfigError) as exc:
        print(f"mach {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"mach {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FormatError, OSError) as exc:
        print(f"mach {args.command}: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
