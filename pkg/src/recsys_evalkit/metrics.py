"""Top-k ranking metrics with fold-in masking.

Ranked lists are item-index arrays in descending score order. Scores are
ranked with ties broken by ascending item index. nDCG uses binary gain and a
``1 / log2(rank + 1)`` discount, normalised by the ideal DCG truncated at k.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ContractError, DomainError

NDCG_GAIN = "binary"
NDCG_DISCOUNT = "log2(rank+1)"

KINDS = ("hitrate", "recall", "precision", "ndcg")
_NAME = re.compile(r"^(hitrate|recall|precision|ndcg)@(\d+)$")


@dataclass(frozen=True, order=True)
class MetricSpec:
    kind: str
    k: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown metric {self.kind!r}")
        if self.k < 1:
            raise DomainError(f"cutoff must be >= 1, got {self.k}")

    @classmethod
    def parse(cls, name: str) -> MetricSpec:
        m = _NAME.match(name.strip().lower())
        if not m:
            raise DomainError(f"cannot parse metric {name!r}")
        return cls(m.group(1), int(m.group(2)))

    def __str__(self):
        return f"{self.kind}@{self.k}"


def _check_k(k):
    if k < 1:
        raise DomainError(f"cutoff must be >= 1, got {k}")


def _hits(ranked, relevant, k):
    relevant = set(int(x) for x in relevant)
    return sum(1 for y in list(ranked)[:k] if int(y) in relevant)


def hitrate_at_k(ranked, relevant, k: int) -> float:
    _check_k(k)
    return float(_hits(ranked, relevant, k))


def recall_at_k(ranked, relevant, k: int) -> float:
    _check_k(k)
    return _hits(ranked, relevant, k) / len(relevant)


def precision_at_k(ranked, relevant, k: int) -> float:
    _check_k(k)
    return _hits(ranked, relevant, k) / k


def _discount(rank) -> float:
    return 1.0 / math.log2(float(rank) + 1.0)


# sums use math.fsum (correctly rounded) so the result does not depend on order
def _idcg(n_relevant, k):
    return math.fsum(_discount(r) for r in range(1, min(n_relevant, k) + 1))


def ndcg_at_k(ranked, relevant, k: int) -> float:
    _check_k(k)
    relevant = set(int(x) for x in relevant)
    dcg = math.fsum(_discount(pos) for pos, y in enumerate(list(ranked)[:k], start=1) if int(y) in relevant)
    return dcg / _idcg(len(relevant), k)


def rank_items(scores, mask=()) -> np.ndarray:
    """Unmasked item indices by descending score, ties by ascending index."""
    scores = np.asarray(scores, dtype=np.float64)
    keep = np.ones(len(scores), bool)
    keep[np.asarray(mask, np.int64)] = False
    cand = np.flatnonzero(keep)
    return cand[np.argsort(-scores[cand], kind="stable")]


_FUNCS = {"hitrate": hitrate_at_k, "recall": recall_at_k, "precision": precision_at_k, "ndcg": ndcg_at_k}


def evaluate_user(scores, mask, relevant, specs) -> dict[MetricSpec, float]:
    """Mask the fold-in, rank the rest and evaluate each metric."""
    relevant = np.asarray(relevant, np.int64)
    if len(relevant) == 0:
        raise ContractError("no relevant items to evaluate")
    if np.intersect1d(relevant, np.asarray(mask, np.int64)).size:
        raise ContractError("relevant item inside the fold-in mask")
    ranked = rank_items(scores, mask)
    return {s: _FUNCS[s.kind](ranked, relevant, s.k) for s in specs}


def metrics_from_ranks(ranks, n_relevant, spec: MetricSpec) -> float:
    """A metric value from the 1-based ranks of one user's relevant items."""
    ranks = np.asarray(ranks)
    inside = ranks <= spec.k
    hits = float(inside.sum())
    if spec.kind == "hitrate":
        return hits
    if spec.kind == "recall":
        return hits / n_relevant
    if spec.kind == "precision":
        return hits / spec.k
    return math.fsum(_discount(r) for r in ranks[inside].tolist()) / _idcg(n_relevant, spec.k)


def evaluate_batch(scores, masks, relevants, specs, backend=None) -> dict[MetricSpec, np.ndarray]:
    """Per-user metric values for a block of users.

    `scores` is (n_users, n_items); `masks` and `relevants` are sequences of
    item-index arrays, one per row.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    if len(masks) != n or len(relevants) != n:
        raise ContractError("masks/relevants must have one entry per score row")

    def to_csr(lists):
        indptr = np.zeros(n + 1, np.int64)
        np.cumsum([len(x) for x in lists], out=indptr[1:])
        flat = np.concatenate([np.asarray(x, np.int64) for x in lists]) if n else np.zeros(0, np.int64)
        return indptr, flat

    m_ptr, m_idx = to_csr(masks)
    r_ptr, r_idx = to_csr(relevants)
    for b in range(n):
        if r_ptr[b] == r_ptr[b + 1]:
            raise ContractError(f"row {b}: no relevant items")
    if np.isin(r_idx, m_idx).any():
        for b in range(n):
            if np.intersect1d(relevants[b], masks[b]).size:
                raise ContractError(f"row {b}: relevant item inside the fold-in mask")
    ranks = kernels.relevant_ranks(scores, m_ptr, m_idx, r_ptr, r_idx, backend)
    out = {}
    for spec in specs:
        vals = np.empty(n)
        for b in range(n):
            vals[b] = metrics_from_ranks(ranks[r_ptr[b] : r_ptr[b + 1]], r_ptr[b + 1] - r_ptr[b], spec)
        out[spec] = vals
    return out
