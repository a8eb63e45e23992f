"""Turn R meta-probability vectors into per-class scores and predictions.

For class i the R "gathered" values are P^j[h_j(i)], one per repetition. Three
count-min style estimators reduce them to a score:

* ``unbiased``: B/(B-1) * (mean - 1/B), unbiased for p_i over hash draws
* ``min``: the classic count-min estimate
* ``median``: the count-median estimate
"""
from __future__ import annotations

import enum

import numpy as np

from .core import MachModel, as_batch
from .errors import ConfigError


class Estimator(str, enum.Enum):
    UNBIASED = "unbiased"
    MIN = "min"
    MEDIAN = "median"


def meta_matrix(model: MachModel, x) -> np.ndarray:
    """Meta-probabilities for one input, shape (R, B)."""
    X = as_batch(x, model.config.input_dim)
    return np.stack([c.predict_proba(X)[0] for c in model.classifiers])


def gather(model: MachModel, x) -> np.ndarray:
    """Gathered values G[j, i] = P^j[h_j(i)], shape (R, K)."""
    meta = meta_matrix(model, x)
    return np.take_along_axis(meta, model.bucket_table, axis=1)


def decode(gathered, b: int, est=Estimator.UNBIASED):
    """Reduce gathered values along axis 0 (repetitions) into scores.

    Accepts a length-R vector (returns a float) or an (R, K) matrix.
    Unbiased scores may be negative; they are estimates, not probabilities.
    """
    est = Estimator(est)
    g = np.asarray(gathered, dtype=np.float64)
    if g.shape[0] < 1:
        raise ConfigError("need at least one repetition")
    if est is Estimator.UNBIASED:
        if b < 2:
            raise ConfigError(f"unbiased decode needs B >= 2, got {b}")
        out = (b / (b - 1)) * (g.mean(axis=0) - 1.0 / b)
    elif est is Estimator.MIN:
        out = g.min(axis=0)
    else:
        out = np.median(g, axis=0)
    return float(out) if np.ndim(out) == 0 else out


def scores_from_meta(meta: np.ndarray, table: np.ndarray, est=Estimator.UNBIASED) -> np.ndarray:
    """Per-class scores from an (R, B) meta-probability matrix and an (R, K) bucket table."""
    meta = np.asarray(meta, dtype=np.float64)
    return decode(np.take_along_axis(meta, table, axis=1), meta.shape[1], est)


def score_all(model: MachModel, x, est=Estimator.UNBIASED) -> np.ndarray:
    """Decoded scores for all K classes of one input."""
    return scores_from_meta(meta_matrix(model, x), model.bucket_table, est)


def score_batch(model: MachModel, X, est=Estimator.UNBIASED) -> np.ndarray:
    """Decoded scores for a batch of inputs, shape (N, K)."""
    X = as_batch(X, model.config.input_dim)
    table = model.bucket_table
    est = Estimator(est)
    n, k = X.shape[0], model.config.num_classes
    gathered = np.empty((len(model.classifiers), n, k))
    for j, clf in enumerate(model.classifiers):
        gathered[j] = clf.predict_proba(X)[:, table[j]]
    return decode(gathered, model.config.buckets, est).reshape(n, k)


def top_k(scores, k: int) -> list[tuple[int, float]]:
    """The k best (class, score) pairs: descending score, ties to the lower id."""
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    if not 1 <= k <= n:
        raise ConfigError(f"k must be in [1, {n}], got {k}")
    if k < n:
        kth = np.partition(scores, n - k)[n - k]
        cand = np.flatnonzero(scores >= kth)
    else:
        cand = np.arange(n)
    order = cand[np.lexsort((cand, -scores[cand]))][:k]
    return [(int(i), float(scores[i])) for i in order]


def predict_class(model: MachModel, x, est=Estimator.UNBIASED) -> int:
    return top_k(score_all(model, x, est), 1)[0][0]


def predict_batch(model: MachModel, X, est=Estimator.UNBIASED) -> np.ndarray:
    """Argmax class per row, ties to the lowest id."""
    return np.argmax(score_batch(model, X, est), axis=1)
