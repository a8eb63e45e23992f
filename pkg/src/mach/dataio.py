"""Dataset and evaluation-file parsing, and the binary model format.

Dataset (extreme-classification repository layout)::

    num_samples num_features num_labels
    l1,l2,... idx:val idx:val ...

Evaluation file, one query per line::

    weight | relevant_ids | candidate_ids

The candidate field is optional. A relevant id written as ``*id`` marks the
query's most relevant item.

Model file, all integers and floats little-endian::

    magic    4s   b"MACH"
    version  u32  1
    config   u64 K, B, R, d, hidden_units, master_seed, raw_dim
             u32 epochs, batch_size; f64 learning_rate; u8 mode; 7 pad bytes
    hashes   R x (u64 a, u64 b, u64 p)
    weights  per repetition, f32 row-major, input->output, bias after each matrix
"""
from __future__ import annotations

import math
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from .core import MODES, LabeledSample, MachConfig, MachModel, MetaClassifier, SparseVector
from .errors import ConfigError, FormatError, ParseError, ValidationError
from .hashing import UniversalHash
from .metrics import EvalQuery
from .planner import cost_model

MAGIC = b"MACH"
VERSION = 1
_PREAMBLE = struct.Struct("<4sI")
_CONFIG = struct.Struct("<7QIIdB7x")
_HASH = struct.Struct("<3Q")
HEADER_SIZE = _PREAMBLE.size + _CONFIG.size


@dataclass
class Dataset:
    samples: list
    num_features: int
    num_labels: int


def _parse_ids(text, line_no, what, one_based):
    try:
        ids = [int(t) for t in text.split(",")]
    except ValueError:
        raise ParseError(f"malformed {what} list {text!r}", line_no) from None
    if one_based:
        if any(i < 1 for i in ids):
            raise ParseError(f"{what} id 0 in one-based input", line_no)
        ids = [i - 1 for i in ids]
    if any(i < 0 for i in ids):
        raise ParseError(f"negative {what} id", line_no)
    return ids


def parse_dataset(lines: Iterable[str], expect_dim: int | None = None,
                  one_based: bool = False, require_labels: bool = True) -> Dataset:
    it = iter(lines)
    try:
        header = next(it)
    except StopIteration:
        raise ParseError("empty dataset file", 1) from None
    try:
        n, d, k = (int(t) for t in header.split())
    except ValueError:
        raise ParseError("header must be 'num_samples num_features num_labels'", 1) from None
    if n < 0 or d < 1 or k < 1:
        raise ParseError("header sizes must be positive", 1)
    if expect_dim is not None and d != expect_dim:
        raise ValidationError(f"dataset has {d} features, expected {expect_dim}")

    samples = []
    for line_no, line in enumerate(it, start=2):
        if not line.strip():
            continue
        tokens = line.split()
        labels = []
        if ":" not in tokens[0]:
            labels = _parse_ids(tokens.pop(0), line_no, "label", one_based)
        if not labels and require_labels:
            raise ParseError("sample has no labels", line_no)
        bad = [l for l in labels if l >= k]
        if bad:
            raise ParseError(f"label {bad[0]} outside [0, {k})", line_no)
        if not tokens:
            raise ParseError("sample has no features", line_no)
        pairs = {}
        for tok in tokens:
            idx_s, sep, val_s = tok.partition(":")
            try:
                idx, val = int(idx_s), float(val_s)
            except ValueError:
                raise ParseError(f"malformed feature {tok!r}", line_no) from None
            if not sep:
                raise ParseError(f"malformed feature {tok!r}", line_no)
            if one_based:
                idx -= 1
            if not 0 <= idx < d:
                raise ParseError(f"feature index {idx} outside [0, {d})", line_no)
            if not math.isfinite(val):
                raise ParseError(f"non-finite feature value {val_s!r}", line_no)
            if idx in pairs:
                raise ParseError(f"duplicate feature index {idx}", line_no)
            pairs[idx] = val
        vec = SparseVector.from_pairs(d, pairs.items())
        samples.append(LabeledSample(vec, frozenset(labels)))
    if len(samples) != n:
        raise ParseError(f"header declares {n} samples, found {len(samples)}", 1)
    return Dataset(samples, d, k)


def load_dataset(path, expect_dim: int | None = None, one_based: bool = False,
                 require_labels: bool = True) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return parse_dataset(fh, expect_dim, one_based, require_labels)


def dump_dataset(samples: Sequence[LabeledSample], out: TextIO, num_features: int,
                 num_labels: int) -> None:
    out.write(f"{len(samples)} {num_features} {num_labels}\n")
    for s in samples:
        feats = " ".join(f"{i}:{v!r}" for i, v in zip(s.features.indices.tolist(),
                                                      s.features.values.tolist()))
        labels = ",".join(str(l) for l in sorted(s.labels))
        out.write(f"{labels} {feats}\n" if labels else f" {feats}\n")


def save_dataset(samples, path, num_features, num_labels) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        dump_dataset(samples, fh, num_features, num_labels)


def parse_eval(lines: Iterable[str], one_based: bool = False) -> list[EvalQuery]:
    queries = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = [f.strip() for f in line.split("|")]
        if len(fields) not in (2, 3):
            raise ParseError("expected 'weight | relevant_ids | candidate_ids'", line_no)
        try:
            weight = float(fields[0])
        except ValueError:
            raise ParseError(f"malformed weight {fields[0]!r}", line_no) from None
        if not fields[1]:
            raise ParseError("empty relevant set", line_no)
        marked = [t.strip() for t in fields[1].split(",")]
        starred = [t[1:] for t in marked if t.startswith("*")]
        if len(starred) > 1:
            raise ParseError("more than one item marked most relevant", line_no)
        relevant = _parse_ids(",".join(t.lstrip("*") for t in marked), line_no,
                              "relevant", one_based)
        most = None
        if starred:
            most = _parse_ids(starred[0], line_no, "relevant", one_based)[0]
        candidates = None
        if len(fields) == 3:
            candidates = (_parse_ids(fields[2], line_no, "candidate", one_based)
                          if fields[2] else [])
        try:
            queries.append(EvalQuery(len(queries), frozenset(relevant),
                                     None if candidates is None else frozenset(candidates),
                                     weight, most))
        except ValidationError as exc:
            raise ParseError(str(exc), line_no) from None
    return queries


def load_eval_file(path, one_based: bool = False) -> list[EvalQuery]:
    with open(path, encoding="utf-8") as fh:
        return parse_eval(fh, one_based)


def model_file_size(config: MachConfig) -> int:
    params = cost_model(config.num_classes, config.buckets, config.repetitions,
                        config.input_dim, config.hidden_units).parameters
    return HEADER_SIZE + _HASH.size * config.repetitions + 4 * params


def model_to_bytes(model: MachModel) -> bytes:
    c = model.config
    parts = [
        _PREAMBLE.pack(MAGIC, VERSION),
        _CONFIG.pack(c.num_classes, c.buckets, c.repetitions, c.input_dim, c.hidden_units,
                     c.master_seed, c.raw_dim, c.epochs, c.batch_size, c.learning_rate,
                     MODES.index(c.mode)),
    ]
    parts += [_HASH.pack(h.a, h.b, h.p) for h in model.hashes]
    for clf in model.classifiers:
        parts += [np.ascontiguousarray(p, dtype="<f4").tobytes() for p in clf.params]
    return b"".join(parts)


def model_from_bytes(buf: bytes) -> MachModel:
    if len(buf) < _PREAMBLE.size:
        raise FormatError("file too short for a model header")
    magic, version = _PREAMBLE.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, not a model file")
    if version != VERSION:
        raise FormatError(f"unsupported model format version {version} (expected {VERSION})")
    if len(buf) < HEADER_SIZE:
        raise FormatError("truncated config block")
    k, b, r, d, hidden, seed, raw_dim, epochs, batch, lr, mode = _CONFIG.unpack_from(
        buf, _PREAMBLE.size)
    if mode >= len(MODES):
        raise FormatError(f"unknown mode code {mode}")
    try:
        config = MachConfig(k, b, r, d, MODES[mode], hidden, seed, epochs, lr, batch, raw_dim)
    except ConfigError as exc:
        raise FormatError(f"invalid config block: {exc}") from None
    expected = model_file_size(config)
    if len(buf) != expected:
        raise FormatError(f"file is {len(buf)} bytes, config declares {expected}")

    offset = HEADER_SIZE
    hashes = []
    for _ in range(r):
        a, hb, p = _HASH.unpack_from(buf, offset)
        offset += _HASH.size
        try:
            hashes.append(UniversalHash(a, hb, p, b))
        except ConfigError as exc:
            raise FormatError(f"invalid hash block: {exc}") from None

    shapes = [(d, b), (b,)] if hidden == 0 else [(d, hidden), (hidden,), (hidden, b), (b,)]
    classifiers = []
    for _ in range(r):
        params = []
        for shape in shapes:
            n = int(np.prod(shape))
            params.append(np.frombuffer(buf, dtype="<f4", count=n, offset=offset)
                          .astype(np.float32).reshape(shape))
            offset += 4 * n
        classifiers.append(MetaClassifier(params, config.multilabel))
    return MachModel(config, hashes, classifiers)


def save_model(model: MachModel, path) -> None:
    """Write atomically: a temp file in the target directory, then rename."""
    path = Path(path)
    data = model_to_bytes(model)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_model(path) -> MachModel:
    return model_from_bytes(Path(path).read_bytes())
