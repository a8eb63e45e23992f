"""MACH model definition, label hashing and training of the meta-classifiers.

Each of the R repetitions sees the same inputs but labels pushed through its
own hash ``h_j: [K] -> [B]``, so it learns a B-way problem. Repetitions share
nothing but the read-only data: the per-repetition seed is derived from the
master seed and the repetition index, which makes the result independent of
how repetitions are scheduled across workers.
"""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from joblib import Parallel, delayed

from .errors import ConfigError, ValidationError
from .hashing import LARGE_PRIME, UniversalHash, sample_hash

logger = logging.getLogger(__name__)

MULTICLASS = "multiclass"
MULTILABEL = "multilabel"
MODES = (MULTICLASS, MULTILABEL)


@dataclass(frozen=True, eq=False)
class SparseVector:
    """Index/value pairs over a fixed dimension. Indices strictly increasing, no zeros."""

    dim: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)
        if self.dim < 1:
            raise ValidationError(f"dim must be positive, got {self.dim}")
        if idx.ndim != 1 or idx.shape != val.shape:
            raise ValidationError("indices and values must be 1-d and equally long")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise ValidationError(f"index out of range [0, {self.dim})")
            if np.any(np.diff(idx) <= 0):
                raise ValidationError("indices must be strictly increasing")
            if np.any(val == 0.0):
                raise ValidationError("explicit zero values are not allowed")
            if not np.all(np.isfinite(val)):
                raise ValidationError("feature values must be finite")

    @classmethod
    def from_pairs(cls, dim: int, pairs: Iterable[tuple[int, float]]) -> "SparseVector":
        """Build from unordered (index, value) pairs, summing duplicates."""
        acc: dict[int, float] = {}
        for i, v in pairs:
            acc[int(i)] = acc.get(int(i), 0.0) + float(v)
        items = sorted((i, v) for i, v in acc.items() if v != 0.0)
        return cls(dim, [i for i, _ in items], [v for _, v in items])

    @classmethod
    def from_dense(cls, dense) -> "SparseVector":
        dense = np.asarray(dense, dtype=np.float64)
        nz = np.flatnonzero(dense)
        return cls(dense.size, nz, dense[nz])

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def __eq__(self, other):
        if not isinstance(other, SparseVector):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True)
class LabeledSample:
    features: SparseVector
    labels: frozenset

    def __post_init__(self):
        object.__setattr__(self, "labels", frozenset(int(l) for l in self.labels))


def stack(vectors: Sequence[SparseVector], dim: int | None = None) -> sp.csr_matrix:
    """Rows of a CSR matrix, one per vector."""
    if dim is None:
        dim = vectors[0].dim if vectors else 1
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([v.nnz for v in vectors])
    if vectors:
        indices = np.concatenate([v.indices for v in vectors])
        data = np.concatenate([v.values for v in vectors])
    else:
        indices, data = np.zeros(0, np.int64), np.zeros(0)
    return sp.csr_matrix((data, indices, indptr), shape=(len(vectors), dim))


@dataclass(frozen=True)
class MachConfig:
    num_classes: int
    buckets: int
    repetitions: int
    input_dim: int
    mode: str = MULTICLASS
    hidden_units: int = 0
    master_seed: int = 0
    epochs: int = 10
    learning_rate: float = 0.1
    batch_size: int = 64
    # > 0 when inputs of this dimension are feature-hashed down to input_dim
    raw_dim: int = 0

    def __post_init__(self):
        if self.num_classes < 1:
            raise ConfigError(f"num_classes must be positive, got {self.num_classes}")
        if self.buckets < 2:
            raise ConfigError(f"buckets must be >= 2, got {self.buckets}")
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be positive, got {self.input_dim}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.hidden_units < 0:
            raise ConfigError("hidden_units must be non-negative")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must fit in an unsigned 64-bit integer")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise ConfigError("learning_rate must be positive and finite")
        if self.raw_dim < 0:
            raise ConfigError("raw_dim must be non-negative")

    @property
    def multilabel(self) -> bool:
        return self.mode == MULTILABEL


def repetition_seeds(master_seed: int, j: int) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
    """(hash seed, training seed) for repetition ``j``.

    Both are children of ``master_seed`` keyed by ``(j, stream)``, so they do
    not depend on any other repetition or on worker scheduling.
    """
    return (
        np.random.SeedSequence(master_seed, spawn_key=(j, 0)),
        np.random.SeedSequence(master_seed, spawn_key=(j, 1)),
    )


def repetition_hashes(config: MachConfig) -> list[UniversalHash]:
    return [
        sample_hash(repetition_seeds(config.master_seed, j)[0], config.buckets,
                    config.num_classes, min_prime=LARGE_PRIME)
        for j in range(config.repetitions)
    ]


class MetaClassifier:
    """A B-output softmax (multiclass) or sigmoid (multilabel) model over d inputs.

    ``params`` is ``[W, b]`` for the linear model or ``[W1, b1, W2, b2]`` with
    a ReLU hidden layer.
    """

    def __init__(self, params: Sequence[np.ndarray], multilabel: bool = False):
        if len(params) not in (2, 4):
            raise ConfigError("expected 2 (linear) or 4 (one hidden layer) parameter arrays")
        self.params = [np.asarray(p) for p in params]
        self.multilabel = multilabel

    @classmethod
    def initialize(cls, input_dim, outputs, hidden_units=0, multilabel=False, rng=None):
        """Linear models start at zero; hidden models draw every weight matrix
        from U(-1/sqrt(fan_in), 1/sqrt(fan_in)). Biases start at zero."""
        if hidden_units == 0:
            return cls([np.zeros((input_dim, outputs)), np.zeros(outputs)], multilabel)
        rng = np.random.default_rng(rng)
        lim1 = 1.0 / math.sqrt(input_dim)
        lim2 = 1.0 / math.sqrt(hidden_units)
        w1 = rng.uniform(-lim1, lim1, size=(input_dim, hidden_units))
        w2 = rng.uniform(-lim2, lim2, size=(hidden_units, outputs))
        return cls([w1, np.zeros(hidden_units), w2, np.zeros(outputs)], multilabel)

    @property
    def input_dim(self) -> int:
        return self.params[0].shape[0]

    @property
    def outputs(self) -> int:
        return self.params[-1].shape[0]

    @property
    def hidden_units(self) -> int:
        return 0 if len(self.params) == 2 else self.params[1].shape[0]

    @property
    def num_parameters(self) -> int:
        return sum(p.size for p in self.params)

    def astype(self, dtype) -> "MetaClassifier":
        return MetaClassifier([p.astype(dtype) for p in self.params], self.multilabel)

    def _forward(self, X):
        if len(self.params) == 2:
            W, b = self.params
            return X @ W + b, None
        W1, b1, W2, b2 = self.params
        pre = X @ W1 + b1
        hidden = np.maximum(pre, 0.0)
        return hidden @ W2 + b2, (pre, hidden)

    def logits(self, X) -> np.ndarray:
        return np.asarray(self._forward(X)[0], dtype=np.float64)

    def predict_proba(self, X) -> np.ndarray:
        """Softmax rows (multiclass) or elementwise sigmoids (multilabel)."""
        z = self.logits(X)
        if self.multilabel:
            return _sigmoid(z)
        return _softmax(z)

    def loss_and_grad(self, X, targets):
        """Mean batch loss and its gradient with respect to every parameter.

        ``targets`` is an int vector of buckets (multiclass) or an n x B
        0/1 matrix (multilabel).
        """
        n = X.shape[0]
        z, cache = self._forward(X)
        z = np.asarray(z, dtype=np.float64)
        if self.multilabel:
            t = np.asarray(targets, dtype=np.float64)
            loss = float(np.sum(np.logaddexp(0.0, z) - t * z)) / n
            dz = (_sigmoid(z) - t) / n
        else:
            y = np.asarray(targets, dtype=np.int64)
            shifted = z - z.max(axis=1, keepdims=True)
            log_norm = np.log(np.exp(shifted).sum(axis=1))
            loss = float(np.sum(log_norm - shifted[np.arange(n), y])) / n
            dz = np.exp(shifted - log_norm[:, None])
            dz[np.arange(n), y] -= 1.0
            dz /= n
        if cache is None:
            return loss, [np.asarray(X.T @ dz), dz.sum(axis=0)]
        pre, hidden = cache
        W2 = self.params[2]
        d_hidden = (dz @ W2.T) * (pre > 0)
        grads = [np.asarray(X.T @ d_hidden), d_hidden.sum(axis=0), hidden.T @ dz, dz.sum(axis=0)]
        return loss, grads


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _sigmoid(z):
    # two-branch form avoids overflow in exp for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def train_classifier(X, targets, outputs, *, hidden_units=0, multilabel=False,
                     epochs=10, learning_rate=0.1, batch_size=64, seed=None,
                     on_epoch: Callable[[int, float], None] | None = None):
    """Fit one MetaClassifier by mini-batch SGD; returns (classifier, epoch losses).

    ``targets`` as in :meth:`MetaClassifier.loss_and_grad`, one row per row of
    ``X``. Training runs in float64; the returned parameters are float32,
    the precision the model file stores.
    """
    X = sp.csr_matrix(X, dtype=np.float64)
    rng = np.random.default_rng(seed)
    clf = MetaClassifier.initialize(X.shape[1], outputs, hidden_units, multilabel, rng)
    n = X.shape[0]
    history = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            batch = order[start:start + batch_size]
            loss, grads = clf.loss_and_grad(X[batch], targets[batch])
            total += loss * batch.size
            for p, g in zip(clf.params, grads):
                p -= learning_rate * g
        history.append(total / n)
        if on_epoch is not None:
            on_epoch(epoch, history[-1])
    return clf.astype(np.float32), history


@dataclass(frozen=True, eq=False)
class MachModel:
    config: MachConfig
    hashes: tuple
    classifiers: tuple
    # per-repetition, per-epoch mean training loss; not persisted
    history: tuple = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "hashes", tuple(self.hashes))
        object.__setattr__(self, "classifiers", tuple(self.classifiers))
        cfg = self.config
        if len(self.hashes) != cfg.repetitions or len(self.classifiers) != cfg.repetitions:
            raise ConfigError("number of hashes and classifiers must equal repetitions")
        for h in self.hashes:
            if h.range_b != cfg.buckets:
                raise ConfigError("hash range differs from configured bucket count")
        for c in self.classifiers:
            if c.input_dim != cfg.input_dim or c.outputs != cfg.buckets \
                    or c.hidden_units != cfg.hidden_units:
                raise ConfigError("classifier shape does not match the config")

    @functools.cached_property
    def bucket_table(self) -> np.ndarray:
        """R x K array: bucket of class i under repetition j."""
        table = np.stack([h.table(self.config.num_classes) for h in self.hashes])
        table.flags.writeable = False
        return table

    @property
    def num_parameters(self) -> int:
        return sum(c.num_parameters for c in self.classifiers)

    def prefix(self, r: int) -> "MachModel":
        """The model restricted to its first ``r`` repetitions."""
        if not 1 <= r <= self.config.repetitions:
            raise ConfigError(f"prefix length must be in [1, {self.config.repetitions}]")
        cfg = MachConfig(**{**self.config.__dict__, "repetitions": r})
        return MachModel(cfg, self.hashes[:r], self.classifiers[:r], self.history[:r])


def transform_label(labels, h: UniversalHash) -> set:
    """Image of a label set under ``h`` (colliding labels merge)."""
    labels = set(labels)
    if not labels:
        raise ValidationError("a sample needs at least one label")
    return {h(int(l)) for l in labels}


def validate_samples(data: Sequence[LabeledSample], config: MachConfig) -> None:
    if not data:
        raise ValidationError("training data is empty")
    for n, s in enumerate(data):
        if s.features.dim != config.input_dim:
            raise ValidationError(
                f"sample {n}: feature dim {s.features.dim} != input_dim {config.input_dim}")
        if not np.all(np.isfinite(s.features.values)):
            raise ValidationError(f"sample {n}: non-finite feature value")
        if not s.labels:
            raise ValidationError(f"sample {n}: no labels")
        if min(s.labels) < 0 or max(s.labels) >= config.num_classes:
            raise ValidationError(
                f"sample {n}: label outside [0, {config.num_classes})")
        if not config.multilabel and len(s.labels) != 1:
            raise ValidationError(
                f"sample {n}: {len(s.labels)} labels in multiclass mode")


def _label_matrix(data, num_classes) -> sp.csr_matrix:
    rows = np.repeat(np.arange(len(data)), [len(s.labels) for s in data])
    cols = np.fromiter((l for s in data for l in sorted(s.labels)), dtype=np.int64)
    return sp.csr_matrix((np.ones(cols.size), (rows, cols)), shape=(len(data), num_classes))


class _HashedMultilabelTargets:
    """Lazily maps a batch of label rows to 0/1 bucket targets through ``table``."""

    def __init__(self, labels: sp.csr_matrix, table: np.ndarray, buckets: int):
        self.labels = labels
        self.table = table
        self.buckets = buckets

    def __getitem__(self, rows):
        sub = self.labels[rows].tocoo()
        out = np.zeros((sub.shape[0], self.buckets))
        out[sub.row, self.table[sub.col]] = 1.0
        return out


def _fit_repetition(j, X, y, labels, h, config):
    _, train_seed = repetition_seeds(config.master_seed, j)
    table = h.table(config.num_classes)
    if config.multilabel:
        targets = _HashedMultilabelTargets(labels, table, config.buckets)
    else:
        targets = table[y]
    clf, history = train_classifier(
        X, targets, config.buckets, hidden_units=config.hidden_units,
        multilabel=config.multilabel, epochs=config.epochs,
        learning_rate=config.learning_rate, batch_size=config.batch_size, seed=train_seed,
    )
    logger.debug("repetition %d done, final loss %s", j, history[-1] if history else None)
    return clf, tuple(history)


def train(data: Sequence[LabeledSample], config: MachConfig, *, hashes=None,
          n_jobs: int = 1) -> MachModel:
    """Train the R meta-classifiers, fanning repetitions out over ``n_jobs`` threads.

    ``hashes`` overrides the seed-derived hash functions (useful to force an
    injective hash); the output does not depend on ``n_jobs``.
    """
    validate_samples(data, config)
    if hashes is None:
        hashes = repetition_hashes(config)
    hashes = list(hashes)
    if len(hashes) != config.repetitions:
        raise ConfigError("need exactly one hash per repetition")
    X = stack([s.features for s in data], config.input_dim)
    y = labels = None
    if config.multilabel:
        labels = _label_matrix(data, config.num_classes)
    else:
        y = np.fromiter((next(iter(s.labels)) for s in data), dtype=np.int64)
    jobs = (delayed(_fit_repetition)(j, X, y, labels, h, config) for j, h in enumerate(hashes))
    results = Parallel(n_jobs=max(1, n_jobs), prefer="threads")(jobs)
    return MachModel(config, hashes, [c for c, _ in results], tuple(h for _, h in results))


def meta_predict(model: MachModel, j: int, x) -> np.ndarray:
    """Bucket probabilities of repetition ``j`` for one SparseVector (or a CSR batch)."""
    if not 0 <= j < model.config.repetitions:
        raise ConfigError(f"repetition index {j} outside [0, {model.config.repetitions})")
    X = as_batch(x, model.config.input_dim)
    proba = model.classifiers[j].predict_proba(X)
    return proba[0] if isinstance(x, SparseVector) else proba


def as_batch(x, input_dim: int) -> sp.csr_matrix:
    if isinstance(x, SparseVector):
        if x.dim != input_dim:
            raise ValidationError(f"input dim {x.dim} != model input_dim {input_dim}")
        return stack([x], input_dim)
    if sp.issparse(x) or isinstance(x, np.ndarray):
        if x.ndim != 2 or x.shape[1] != input_dim:
            raise ValidationError(f"input dim {x.shape[-1]} != model input_dim {input_dim}")
        return sp.csr_matrix(x, dtype=np.float64)
    vectors = list(x)
    for v in vectors:
        if v.dim != input_dim:
            raise ValidationError(f"input dim {v.dim} != model input_dim {input_dim}")
    return stack(vectors, input_dim)
