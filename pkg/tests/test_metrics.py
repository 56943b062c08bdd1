import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recsys_evalkit import metrics as M
from recsys_evalkit.errors import ContractError, DomainError
from recsys_evalkit.metrics import MetricSpec

from .conftest import BACKENDS


# naive reference implementations straight from the definitions
def ref_hits(ranked, rel, k):
    return sum(1 for i in range(min(k, len(ranked))) if ranked[i] in rel)


def ref(kind, ranked, rel, k):
    h = ref_hits(ranked, rel, k)
    if kind == "hitrate":
        return float(h)
    if kind == "recall":
        return h / len(rel)
    if kind == "precision":
        return h / k
    dcg = math.fsum(1.0 / math.log2(i + 2) for i in range(min(k, len(ranked))) if ranked[i] in rel)
    ideal = math.fsum(1.0 / math.log2(i + 2) for i in range(min(len(rel), k)))
    return dcg / ideal


FUNCS = {"hitrate": M.hitrate_at_k, "recall": M.recall_at_k, "precision": M.precision_at_k, "ndcg": M.ndcg_at_k}


def test_spec_parse_and_str():
    s = MetricSpec.parse("HitRate@50")
    assert s == MetricSpec("hitrate", 50)
    assert str(s) == "hitrate@50"
    for bad in ("hitrate", "map@10", "ndcg@0", "recall@-1"):
        with pytest.raises(DomainError):
            MetricSpec.parse(bad)
    with pytest.raises(DomainError):
        MetricSpec("ndcg", 0)


def test_hitrate_examples():
    ranked = list(range(100))
    assert M.hitrate_at_k(ranked, [0], 50) == 1
    assert M.hitrate_at_k(ranked, [50], 50) == 0  # rank 51


def test_recall_examples():
    assert M.recall_at_k([3, 1, 2, 0], [3, 1], 2) == 1.0
    assert M.recall_at_k([3, 1, 2, 0], [3, 0], 2) == 0.5


def test_precision_examples():
    assert M.precision_at_k(list(range(20)), [0], 10) == 0.1
    assert M.precision_at_k(list(range(20)), [15], 10) == 0.0


def test_ndcg_examples():
    assert M.ndcg_at_k([4, 2, 1], [4], 10) == 1.0
    assert M.ndcg_at_k([0, 1, 2, 3], [2], 10) == pytest.approx(0.5, abs=1e-15)
    assert M.ndcg_at_k([5, 6, 0], [5, 6], 10) == 1.0


def test_k_validation():
    for f in FUNCS.values():
        with pytest.raises(DomainError):
            f([0, 1], [0], 0)


def test_exhaustive_against_reference():
    """Every relevant-position pattern on lists of up to 8 candidates, all cutoffs."""
    for n in range(1, 9):
        ranked = list(range(n))
        for r in range(1, n + 1):
            for rel in itertools.combinations(ranked, r):
                rel = set(rel)
                for k in range(1, n + 2):
                    for kind, f in FUNCS.items():
                        assert f(ranked, rel, k) == ref(kind, ranked, rel, k), (kind, n, rel, k)


def test_exhaustive_through_scoring():
    """All orderings of 6 scored items, through rank_items and the batch path."""
    specs = [MetricSpec(kind, k) for kind in M.KINDS for k in (1, 2, 3, 6)]
    n = 6
    for perm in itertools.permutations(range(n)):
        scores = np.array(perm, float)
        ranked = list(np.argsort(-scores, kind="stable"))
        for rel in ([0], [1, 4], [0, 2, 5]):
            direct = M.evaluate_user(scores, [], rel, specs)
            batch = M.evaluate_batch(scores[None, :], [np.array([], np.int64)], [np.array(rel)], specs)
            for s in specs:
                expect = ref(s.kind, ranked, set(rel), s.k)
                assert direct[s] == expect
                assert batch[s][0] == expect


def test_ties_ascending_index():
    scores = np.zeros(5)
    assert M.rank_items(scores).tolist() == [0, 1, 2, 3, 4]
    assert M.evaluate_user(scores, [], [2], [MetricSpec("hitrate", 2)])[MetricSpec("hitrate", 2)] == 0.0
    assert M.evaluate_user(scores, [], [2], [MetricSpec("hitrate", 3)])[MetricSpec("hitrate", 3)] == 1.0


def test_unique_max_always_hits():
    scores = np.random.default_rng(0).random(30)
    best = int(np.argmax(scores))
    vals = M.evaluate_user(scores, [], [best], [MetricSpec("hitrate", k) for k in (1, 5, 30)])
    assert all(v == 1.0 for v in vals.values())


def test_masking_promotes_by_one():
    scores = np.array([0.9, 0.8, 0.7, 0.1])
    rel = [2]
    before = M.rank_items(scores).tolist().index(2)
    after = M.rank_items(scores, [0]).tolist().index(2)
    assert after == before - 1
    assert M.evaluate_user(scores, [0], rel, [MetricSpec("hitrate", 2)])[MetricSpec("hitrate", 2)] == 1.0


def test_relevant_in_mask_rejected():
    with pytest.raises(ContractError):
        M.evaluate_user(np.zeros(4), [1], [1], [MetricSpec("hitrate", 1)])
    with pytest.raises(ContractError):
        M.evaluate_batch(np.zeros((1, 4)), [[1]], [[1]], [MetricSpec("hitrate", 1)])
    with pytest.raises(ContractError):
        M.evaluate_user(np.zeros(4), [], [], [MetricSpec("hitrate", 1)])


def test_ndcg_not_monotone_with_truncated_ideal():
    # the ideal DCG is truncated at k, so nDCG may drop as k grows
    assert M.ndcg_at_k([0, 1], {0, 1}, 1) == 1.0
    assert M.ndcg_at_k([0, 2, 1], {0, 1}, 2) < 1.0


def test_hitrate_equals_recall_single_relevant():
    g = np.random.default_rng(1)
    for _ in range(500):
        n = int(g.integers(2, 40))
        ranked = list(g.permutation(n))
        rel = [int(g.integers(n))]
        k = int(g.integers(1, n + 1))
        assert M.hitrate_at_k(ranked, rel, k) == M.recall_at_k(ranked, rel, k)


instances = st.integers(2, 30).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(-5, 5, allow_nan=False), min_size=n, max_size=n),
        st.sets(st.integers(0, n - 1), min_size=1, max_size=n),
    )
)


@settings(max_examples=200, deadline=None)
@given(inst=instances)
def test_metric_properties(inst):
    scores, rel = inst
    scores = np.array(scores)
    ranked = M.rank_items(scores)
    n = len(scores)
    prev = {kind: -1.0 for kind in M.KINDS}
    for k in range(1, n + 1):
        vals = {kind: f(ranked, rel, k) for kind, f in FUNCS.items()}
        # precision * k == hitrate
        assert vals["precision"] * k == pytest.approx(vals["hitrate"], abs=1e-12)
        for kind in ("recall", "precision", "ndcg"):
            assert 0.0 <= vals[kind] <= 1.0 + 1e-12
        assert 0 <= vals["hitrate"] <= len(rel)
        # non-decreasing in k; precision divides by k and nDCG's ideal grows
        # with k, so those two are only monotone for a single relevant item
        for kind in ("hitrate", "recall", "ndcg") if len(rel) == 1 else ("hitrate", "recall"):
            assert vals[kind] >= prev[kind] - 1e-12
            prev[kind] = vals[kind]
    # invariance under a strictly monotone transform (exact in floating point)
    assert M.rank_items(scores * 8.0).tolist() == ranked.tolist()


@settings(max_examples=100, deadline=None)
@given(inst=instances, data=st.data())
def test_batch_matches_per_user(inst, data):
    scores, rel = inst
    scores = np.round(np.array(scores), 1)  # force ties
    n = len(scores)
    rest = sorted(set(range(n)) - rel)
    mask = data.draw(st.lists(st.sampled_from(rest), unique=True)) if rest else []
    specs = [MetricSpec(kind, k) for kind in M.KINDS for k in (1, 3, 10)]
    direct = M.evaluate_user(scores, mask, sorted(rel), specs)
    for backend in BACKENDS:
        batch = M.evaluate_batch(scores[None, :], [np.array(mask, np.int64)], [np.array(sorted(rel))], specs, backend)
        for s in specs:
            assert batch[s][0] == direct[s]
