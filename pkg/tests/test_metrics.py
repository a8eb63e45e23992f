import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mach.errors import ConfigError, ValidationError
from mach.metrics import (
    EvalQuery,
    aggregate,
    average_precision_at_k,
    evaluate,
    map_at_k,
    mrr_at_k,
    ndcg_at_k,
    precision_at_k,
    recall_at_k,
)


def q(*relevant, **kw):
    return EvalQuery(0, frozenset(relevant), **kw)


# Naive references: written independently from the library, one formula each.

def ref_precision(ranked, rel, k):
    return len(set(ranked[:k]) & rel) / k


def ref_recall(ranked, rel, k):
    return len(set(ranked[:k]) & rel) / len(rel)


def ref_ap(ranked, rel, k):
    top = ranked[:k]
    s = sum(ref_precision(ranked, rel, i) for i in range(1, len(top) + 1) if top[i - 1] in rel)
    return s / min(k, len(rel))


def ref_mrr(ranked, rel, k):
    ranks = [i + 1 for i, item in enumerate(ranked[:k]) if item in rel]
    return 1 / ranks[0] if ranks else 0.0


def ref_ndcg(ranked, rel, k):
    gains = np.array([1.0 if item in rel else 0.0 for item in ranked[:k]])
    disc = np.log2(np.arange(2, gains.size + 2))
    dcg = float(np.sum((2**gains - 1) / disc))
    ideal = np.ones(min(k, len(rel)))
    idcg = float(np.sum((2**ideal - 1) / np.log2(np.arange(2, ideal.size + 2))))
    return dcg / idcg if idcg else 0.0


def random_instance(rng):
    n = int(rng.integers(1, 30))
    ranked = rng.permutation(40)[:n].tolist()
    rel = set(rng.choice(40, size=int(rng.integers(1, 8)), replace=False).tolist())
    k = int(rng.integers(1, 35))
    return ranked, rel, k


class TestWorkedValues:
    def test_single_relevant_at_top(self):
        assert precision_at_k([7, 1], q(7), 1) == 1.0
        assert average_precision_at_k([7, 1], q(7), 1) == 1.0

    def test_ap_ranks_one_and_three(self):
        assert average_precision_at_k(["a", "x", "b"], q("a", "b"), 3) == pytest.approx(
            0.5 * (1 + 2 / 3), abs=1e-12)
        assert map_at_k(["a", "x", "b"], q("a", "b"), 3) == pytest.approx(0.8333, abs=1e-4)

    def test_ap_literal_k_normaliser(self):
        assert average_precision_at_k(["a", "x", "b"], q("a", "b"), 3, normalizer="k") == \
            pytest.approx((1 + 2 / 3) / 3)
        with pytest.raises(ConfigError):
            average_precision_at_k([1], q(1), 1, normalizer="n")

    def test_ndcg_rank_two(self):
        assert ndcg_at_k([3, 9], q(9), 2) == pytest.approx(1 / math.log2(3), abs=1e-12)
        assert ndcg_at_k([3, 9], q(9), 2) == pytest.approx(0.6309, abs=1e-4)
        assert ndcg_at_k([3, 9], q(9), 2, log_base=math.e) == pytest.approx(math.log(2) / math.log(3))

    def test_recall(self):
        assert recall_at_k(["a", "c"], q("a", "b"), 2) == 0.5
        assert recall_at_k(["b", "c", "a"], q("a", "b"), 3) == 1.0

    def test_mrr(self):
        assert mrr_at_k([4, 5, 6], q(6), 3) == pytest.approx(1 / 3)
        assert mrr_at_k([4, 5, 6], q(6), 2) == 0.0

    def test_mrr_most_relevant(self):
        query = q(1, 2, most_relevant=2)
        assert mrr_at_k([1, 2], query, 2) == 1.0
        assert mrr_at_k([1, 2], query, 2, most_relevant_only=True) == 0.5
        with pytest.raises(ConfigError):
            mrr_at_k([1, 2], q(1, 2), 2, most_relevant_only=True)

    def test_ndcg_ideal(self):
        assert ndcg_at_k([1, 2, 3], q(1, 2, 3, 4), 3) == pytest.approx(1.0)

    def test_no_hits_is_zero(self):
        for fn in (precision_at_k, recall_at_k, average_precision_at_k, mrr_at_k, ndcg_at_k):
            assert fn([5, 6, 7], q(1), 3) == 0.0

    def test_short_list_tail_counts_as_miss(self):
        assert precision_at_k([1], q(1), 4) == 0.25

    def test_bad_k(self):
        with pytest.raises(ConfigError):
            precision_at_k([1], q(1), 0)


class TestEvalQuery:
    def test_empty_relevant(self):
        with pytest.raises(ValidationError):
            EvalQuery(0, frozenset())

    def test_relevant_must_be_candidates(self):
        with pytest.raises(ValidationError):
            EvalQuery(0, frozenset({1, 2}), candidates=frozenset({1, 5}))

    @pytest.mark.parametrize("w", [-1.0, math.inf, math.nan])
    def test_weight(self, w):
        with pytest.raises(ValidationError):
            EvalQuery(0, frozenset({1}), weight=w)


class TestAggregate:
    def test_weighted(self):
        assert aggregate([(1, 3), (0, 1)], weighted=True) == 0.75
        assert aggregate([(1, 3), (0, 1)], weighted=False) == 0.5

    def test_equal_weights(self):
        vals = [(0.2, 2.0), (0.9, 2.0), (0.4, 2.0)]
        assert aggregate(vals, True) == pytest.approx(aggregate(vals, False))

    def test_zero_weight_query(self):
        assert aggregate([(1.0, 0.0), (0.0, 1.0)], True) == 0.0
        assert aggregate([(1.0, 0.0), (0.0, 1.0)], False) == 0.5

    def test_errors(self):
        with pytest.raises(ConfigError):
            aggregate([(1.0, 0.0)], True)
        with pytest.raises(ConfigError):
            aggregate([], False)

    def test_random_vs_formula(self):
        rng = np.random.default_rng(0)
        m, w = rng.random(50), rng.random(50) * 10
        assert aggregate(zip(m, w), True) == pytest.approx(float(np.dot(m, w) / w.sum()))


class TestAgainstReferences:
    def test_random_instances(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            ranked, rel, k = random_instance(rng)
            query = q(*rel)
            assert precision_at_k(ranked, query, k) == pytest.approx(ref_precision(ranked, rel, k))
            assert recall_at_k(ranked, query, k) == pytest.approx(ref_recall(ranked, rel, k))
            assert map_at_k(ranked, query, k) == pytest.approx(ref_ap(ranked, rel, k))
            assert mrr_at_k(ranked, query, k) == pytest.approx(ref_mrr(ranked, rel, k))
            assert ndcg_at_k(ranked, query, k) == pytest.approx(ref_ndcg(ranked, rel, k))


METRICS = [precision_at_k, recall_at_k, average_precision_at_k, mrr_at_k, ndcg_at_k]

instances = st.tuples(
    st.permutations(list(range(20))),
    st.sets(st.integers(0, 19), min_size=1, max_size=6),
    st.integers(1, 20),
)


class TestProperties:
    @settings(max_examples=200, deadline=None)
    @given(instances)
    def test_bounded(self, inst):
        ranked, rel, k = inst
        for fn in METRICS:
            assert 0.0 <= fn(ranked, q(*rel), k) <= 1.0 + 1e-12

    @settings(max_examples=200, deadline=None)
    @given(instances, st.data())
    def test_moving_relevant_up_never_hurts(self, inst, data):
        ranked, rel, k = inst
        pos = [i for i, item in enumerate(ranked) if item in rel and i > 0]
        if not pos:
            return
        i = data.draw(st.sampled_from(pos))
        j = data.draw(st.integers(0, i - 1))
        if ranked[j] in rel:
            return
        better = list(ranked)
        better[i], better[j] = better[j], better[i]
        for fn in METRICS:
            assert fn(better, q(*rel), k) >= fn(ranked, q(*rel), k) - 1e-12

    @settings(max_examples=200, deadline=None)
    @given(instances, st.randoms(use_true_random=False))
    def test_tail_permutation_invariant(self, inst, rnd):
        ranked, rel, k = inst
        last = max(i for i, item in enumerate(ranked) if item in rel)
        tail = ranked[last + 1:]
        rnd.shuffle(tail)
        shuffled = ranked[:last + 1] + tail
        for fn in METRICS:
            assert fn(shuffled, q(*rel), k) == fn(ranked, q(*rel), k)


class TestEvaluate:
    def test_perfect_rankings(self):
        queries = [EvalQuery(0, {1, 2}, weight=2.0), EvalQuery(1, {0}, weight=1.0)]
        rankings = [[1, 2, 0, 3], [0, 1, 2, 3]]
        report = evaluate(rankings, queries, ks=[2, 3])
        for rec in report:
            if rec["metric"] != "precision":
                assert rec["weighted"] == rec["unweighted"] == 1.0

    def test_record_fields_and_weights(self):
        queries = [EvalQuery(0, {1}, weight=3.0), EvalQuery(1, {1}, weight=1.0)]
        report = evaluate([[1, 0], [0, 1]], queries, ks=[1])
        rec = {r["metric"]: r for r in report}
        assert set(rec["recall"]) == {"metric", "k", "weighted", "unweighted"}
        assert rec["recall"]["weighted"] == 0.75
        assert rec["recall"]["unweighted"] == 0.5
        assert "mrr_most_rel" not in rec

    def test_most_relevant_variants(self):
        queries = [EvalQuery(0, {1, 2}, most_relevant=2)]
        rec = {(r["metric"], r["k"]): r for r in evaluate([[1, 2]], queries, ks=[1, 2])}
        assert rec["mrr_most_rel", 2]["unweighted"] == 0.5
        assert rec["precision_most_rel", 1]["unweighted"] == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            evaluate([[1]], [], ks=[1])
