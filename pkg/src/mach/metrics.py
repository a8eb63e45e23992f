"""Matching and ranking metrics with session-weighted aggregation.

All metrics use binary relevance. A ranked list is any sequence of distinct
item ids in descending score order; a list shorter than k counts its missing
tail as non-relevant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ConfigError, ValidationError


@dataclass(frozen=True)
class EvalQuery:
    """One evaluation query.

    ``candidates`` (when given) restricts ranking to those items, e.g. the
    purchases plus the seen-but-not-purchased products of a session.
    ``most_relevant`` optionally designates the single top relevant item.
    """

    query_id: int
    relevant: frozenset
    candidates: frozenset | None = None
    weight: float = 1.0
    most_relevant: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "relevant", frozenset(self.relevant))
        if self.candidates is not None:
            object.__setattr__(self, "candidates", frozenset(self.candidates))
        if not self.relevant:
            raise ValidationError(f"query {self.query_id}: empty relevant set")
        if not (self.weight >= 0 and math.isfinite(self.weight)):
            raise ValidationError(f"query {self.query_id}: weight must be finite and >= 0")
        if self.candidates is not None and not self.relevant <= self.candidates:
            raise ValidationError(f"query {self.query_id}: relevant items missing from candidates")
        if self.most_relevant is not None and self.most_relevant not in self.relevant:
            raise ValidationError(f"query {self.query_id}: most_relevant not among relevant")


def _check_k(k):
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")


def _hits(ranked: Sequence, relevant, k: int) -> list[bool]:
    return [item in relevant for item in list(ranked)[:k]]


def precision_at_k(ranked, q: EvalQuery, k: int) -> float:
    _check_k(k)
    return sum(_hits(ranked, q.relevant, k)) / k


def recall_at_k(ranked, q: EvalQuery, k: int) -> float:
    _check_k(k)
    return sum(_hits(ranked, q.relevant, k)) / len(q.relevant)


def average_precision_at_k(ranked, q: EvalQuery, k: int, normalizer: str = "min") -> float:
    """Sum of P@i over relevant ranks i <= k.

    ``normalizer="min"`` divides by min(k, |relevant|) (the usual IR
    convention); ``"k"`` divides by k as a literal 1/K reading does.
    """
    _check_k(k)
    if normalizer not in ("min", "k"):
        raise ConfigError(f"normalizer must be 'min' or 'k', got {normalizer!r}")
    total, found = 0.0, 0
    for i, hit in enumerate(_hits(ranked, q.relevant, k), start=1):
        if hit:
            found += 1
            total += found / i
    denom = min(k, len(q.relevant)) if normalizer == "min" else k
    return total / denom


map_at_k = average_precision_at_k


def mrr_at_k(ranked, q: EvalQuery, k: int, most_relevant_only: bool = False) -> float:
    """1 / rank of the first relevant item within the top k, else 0."""
    _check_k(k)
    relevant = q.relevant
    if most_relevant_only:
        if q.most_relevant is None:
            raise ConfigError(f"query {q.query_id} has no designated most relevant item")
        relevant = {q.most_relevant}
    for i, hit in enumerate(_hits(ranked, relevant, k), start=1):
        if hit:
            return 1.0 / i
    return 0.0


def ndcg_at_k(ranked, q: EvalQuery, k: int, log_base: float = 2.0) -> float:
    """DCG over IDCG with gains 2^rel - 1 and discount log(i + 1)."""
    _check_k(k)
    dcg = sum(1.0 / math.log(i + 1, log_base)
              for i, hit in enumerate(_hits(ranked, q.relevant, k), start=1) if hit)
    ideal = sum(1.0 / math.log(i + 1, log_base)
                for i in range(1, min(k, len(q.relevant)) + 1))
    return dcg / ideal if ideal > 0 else 0.0


def aggregate(per_query: Iterable[tuple[float, float]], weighted: bool) -> float:
    """Weighted mean sum(m*w)/sum(w), or the plain mean of the metric values."""
    pairs = list(per_query)
    if not pairs:
        raise ConfigError("nothing to aggregate")
    if not weighted:
        return sum(m for m, _ in pairs) / len(pairs)
    total_w = sum(w for _, w in pairs)
    if total_w <= 0:
        raise ConfigError("weighted aggregate needs a positive total weight")
    return sum(m * w for m, w in pairs) / total_w


def evaluate(rankings: Sequence[Sequence[int]], queries: Sequence[EvalQuery],
             ks: Sequence[int] = (1, 5, 10, 100), map_normalizer: str = "min",
             log_base: float = 2.0) -> list[dict]:
    """Every metric at every k, weighted and unweighted.

    Returns one record per metric: ``{"metric", "k", "weighted", "unweighted"}``.
    The ``*_most_rel`` variants are added when every query designates its
    most relevant item.
    """
    if len(rankings) != len(queries):
        raise ValidationError(f"{len(rankings)} rankings for {len(queries)} queries")
    fns = {
        "precision": precision_at_k,
        "recall": recall_at_k,
        "map": lambda r, q, k: average_precision_at_k(r, q, k, map_normalizer),
        "mrr": mrr_at_k,
        "ndcg": lambda r, q, k: ndcg_at_k(r, q, k, log_base),
    }
    if queries and all(q.most_relevant is not None for q in queries):
        fns["mrr_most_rel"] = lambda r, q, k: mrr_at_k(r, q, k, most_relevant_only=True)
        fns["precision_most_rel"] = lambda r, q, k: precision_at_k(
            r, EvalQuery(q.query_id, {q.most_relevant}), k)
    total_w = sum(q.weight for q in queries)
    report = []
    for name, fn in fns.items():
        for k in ks:
            values = [(fn(r, q, k), q.weight) for r, q in zip(rankings, queries)]
            report.append({
                "metric": name,
                "k": k,
                "weighted": aggregate(values, True) if total_w > 0 else float("nan"),
                "unweighted": aggregate(values, False),
            })
    return report
