"""Bootstrapped nested cross-validation and the statistics around it.

``nested_cv`` runs one full hyperparameter search per outer user fold and
returns the k held-out scores; ``bootstrap_ci`` turns those into a
percentile interval. ``mcnemar_test`` compares two systems on the same
users and ``simulate_split_by_ratio`` reproduces the test-set-size confound
of split-by-ratio evaluation.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from . import rng as rngmod
from .data import InteractionDataset
from .errors import ContractError, DomainError, StudyError
from .hyperopt import DEFAULT_BUDGET, N_INIT, SearchSpace, SearchTrace, optimize
from .metrics import MetricSpec, evaluate_batch
from .models import SEARCH_SPACES, FittedModel, fit_model, score_batch
from .models.basic import fit_popularity
from .splitting import FoldAssignment, SplitPlan, assign_user_folds, build_fold_data, inner_folds

_log = logging.getLogger(__name__)

CI_METHOD = "percentile"
DEFAULT_RESAMPLES = 10000
DEFAULT_ALPHA = 0.01
MCNEMAR_EXACT_MAX = 25
SCORE_BLOCK = 512
MAX_REDRAWS = 100_000


# ---------------------------------------------------------------------------
# evaluation of one fitted model on held-out users


def evaluate_users(model: FittedModel, train, fold_ins, targets, specs: Sequence[MetricSpec], fallback=None) -> dict[MetricSpec, np.ndarray]:
    """Per-user metric values; each user's fold-in is masked from its ranking."""
    if fallback is None and any(len(f) == 0 for f in fold_ins):
        fallback = fit_popularity(train)
    out = {s: np.empty(len(fold_ins)) for s in specs}
    for lo in range(0, len(fold_ins), SCORE_BLOCK):
        hi = min(lo + SCORE_BLOCK, len(fold_ins))
        scores = score_batch(model, fold_ins[lo:hi], fallback)
        vals = evaluate_batch(scores, fold_ins[lo:hi], targets[lo:hi], specs)
        for s in specs:
            out[s][lo:hi] = vals[s]
    return out


@dataclass
class FoldResult:
    fold: int
    best_params: dict
    users: np.ndarray
    per_user: dict[str, np.ndarray]  # metric name -> per-user values on test items
    trace: SearchTrace | None = None
    model: FittedModel | None = None

    def mean(self, metric: str) -> float:
        return float(np.mean(self.per_user[metric]))


@dataclass
class FoldScores:
    metric: MetricSpec
    folds: list[FoldResult] = field(default_factory=list)

    @property
    def scores(self) -> np.ndarray:
        return np.array([f.mean(str(self.metric)) for f in self.folds])

    def per_metric(self, name: str) -> np.ndarray:
        return np.array([f.mean(name) for f in self.folds])

    @property
    def mean(self) -> float:
        return float(self.scores.mean())

    def __len__(self):
        return len(self.folds)


def _run_fold(dataset, assignment, plan, fold, family, space, strategy, budget, metric, report_specs, seed, keep_models, n_init=N_INIT):
    try:
        train_folds, val_fold = inner_folds(plan.k, fold)
        model_seed = rngmod.derive_seed(seed, "model", family, fold)
        if len(space):
            inner = build_fold_data(dataset, assignment, val_fold, plan, train_folds=train_folds)
            val_users = [ps for _, ps in inner.eval_users]
            val_in = [ps.fold_in for ps in val_users]
            val_out = [ps.val_items for ps in val_users]
            inner_train = inner.train_matrix.to_csr()

            def objective(params):
                model = fit_model(family, inner_train, params, model_seed)
                return float(evaluate_users(model, inner_train, val_in, val_out, [metric])[metric].mean())

            trace = optimize(objective, space, budget, strategy, rngmod.derive_seed(seed, "search", family, fold), n_init)
            best = trace.best_params
        else:
            trace, best = None, {}
        outer = build_fold_data(dataset, assignment, fold, plan)
        train = outer.train_matrix.to_csr()
        model = fit_model(family, train, best, model_seed, validate=False)
        users = np.array([u for u, _ in outer.eval_users], np.int64)
        hist = [ps.history() for _, ps in outer.eval_users]
        tests = [ps.test_items for _, ps in outer.eval_users]
        vals = evaluate_users(model, train, hist, tests, report_specs)
        return FoldResult(fold, best, users, {str(s): v for s, v in vals.items()}, trace, model if keep_models else None)
    except Exception as e:
        raise StudyError(fold, e) from e


def nested_cv(
    dataset: InteractionDataset,
    family: str,
    space: SearchSpace | None = None,
    plan: SplitPlan = SplitPlan(),
    strategy: str = "bayes",
    budget: int = DEFAULT_BUDGET,
    metric: MetricSpec = MetricSpec("hitrate", 50),
    seed: int | None = None,
    report_metrics: Sequence[MetricSpec] = (),
    jobs: int = 1,
    keep_models: bool = False,
    n_init: int = N_INIT,
) -> FoldScores:
    """Outer user folds for testing, inner 3+1 user split for tuning.

    Per outer fold: tune on the inner split (validation items scored from the
    fold-in), refit on all training folds with the best parameters, and score
    the test items of the held-out users from fold-in plus validation items.
    """
    if plan.n_val < 1:
        raise DomainError("nested CV needs n_val >= 1 for the inner validation")
    space = SEARCH_SPACES[family] if space is None else space
    seed = plan.seed if seed is None else seed
    specs = list(dict.fromkeys([metric, *report_metrics]))
    assignment = assign_user_folds(dataset.n_users, plan.k, plan.seed)
    args = [(dataset, assignment, plan, f, family, space, strategy, budget, metric, specs, seed, keep_models, n_init) for f in range(plan.k)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            folds = list(pool.map(_run_fold, *zip(*args)))
    else:
        folds = [_run_fold(*a) for a in args]
    return FoldScores(metric, folds)


# ---------------------------------------------------------------------------
# confidence intervals


@dataclass(frozen=True)
class ConfidenceInterval:
    level: float
    lo: float
    hi: float
    n_resamples: int
    seed: int
    method: str = CI_METHOD

    def overlaps(self, other: ConfidenceInterval) -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def to_dict(self):
        return {"level": self.level, "lo": self.lo, "hi": self.hi, "n_resamples": self.n_resamples, "seed": self.seed, "method": self.method}


def bootstrap_means(scores, n_resamples: int, seed: int) -> np.ndarray:
    scores = np.asarray(scores, np.float64)
    g = rngmod.stream(seed, "bootstrap")
    idx = g.integers(0, len(scores), size=(n_resamples, len(scores)))
    return scores[idx].mean(axis=1)


def bootstrap_ci(scores, level: float = 0.95, n_resamples: int = DEFAULT_RESAMPLES, seed: int = 0) -> ConfidenceInterval:
    """Percentile bootstrap interval for the mean of the fold scores."""
    scores = np.asarray(scores, np.float64)
    if len(scores) < 2:
        raise DomainError("bootstrap needs at least 2 scores")
    if n_resamples < 1000:
        raise DomainError("use at least 1000 resamples")
    if not 0 < level < 1:
        raise DomainError("level must be in (0, 1)")
    means = bootstrap_means(scores, n_resamples, seed)
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(means, [tail, 1.0 - tail])
    return ConfidenceInterval(level, float(lo), float(hi), n_resamples, seed)


# ---------------------------------------------------------------------------
# paired significance


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    b: int
    c: int
    alpha: float = DEFAULT_ALPHA
    method: str = "exact"
    degenerate: bool = False

    __test__ = False  # not a pytest class

    @property
    def significant(self) -> bool:
        return self.p_value < self.alpha

    def to_dict(self):
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "b": self.b,
            "c": self.c,
            "alpha": self.alpha,
            "method": self.method,
            "degenerate": self.degenerate,
            "significant": self.significant,
        }


def mcnemar_from_counts(b: int, c: int, alpha: float = DEFAULT_ALPHA) -> TestResult:
    n = b + c
    if n == 0:
        return TestResult(0.0, 1.0, 0, 0, alpha, "exact", degenerate=True)
    if n <= MCNEMAR_EXACT_MAX:
        p = min(1.0, 2.0 * float(stats.binom.cdf(min(b, c), n, 0.5)))
        return TestResult(float(min(b, c)), p, b, c, alpha, "exact")
    stat = (abs(b - c) - 1) ** 2 / n
    return TestResult(float(stat), float(stats.chi2.sf(stat, 1)), b, c, alpha, "chi2-cc")


def mcnemar_test(hits_a, hits_b, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Two-sided McNemar test on per-user binary outcomes of two systems."""
    a = np.asarray(hits_a)
    bb = np.asarray(hits_b)
    if a.shape != bb.shape or a.ndim != 1:
        raise ContractError("hit vectors must be 1-D and of equal length")
    if not (np.isin(a, (0, 1)).all() and np.isin(bb, (0, 1)).all()):
        raise ContractError("McNemar needs binary per-user outcomes")
    a = a.astype(bool)
    bb = bb.astype(bool)
    return mcnemar_from_counts(int(np.sum(a & ~bb)), int(np.sum(~a & bb)), alpha)


# ---------------------------------------------------------------------------
# cross-dataset normalisation


@dataclass(frozen=True)
class NormalizedScore:
    raw: float
    best: float
    ratio: float


def normalize_scores(scores: Mapping[str, float]) -> dict[str, NormalizedScore]:
    """Each method's score relative to the best method on the same dataset."""
    if not scores:
        raise DomainError("no scores")
    best = max(scores.values())
    if not best > 0:
        raise DomainError("best score must be positive")
    if any(v <= 0 for v in scores.values()):
        raise DomainError("scores must be positive")
    return {m: NormalizedScore(v, best, v / best) for m, v in scores.items()}


# ---------------------------------------------------------------------------
# split-by-ratio simulation


def simulate_split_by_ratio(
    max_test_size: int = 20,
    catalog_size: int = 1000,
    n_users: int = 10000,
    decay: float = 0.05,
    metrics: Sequence[MetricSpec] = (MetricSpec("ndcg", 10), MetricSpec("recall", 50), MetricSpec("precision", 10), MetricSpec("hitrate", 50)),
    seed: int = 0,
    batch: int = 2000,
) -> list[dict]:
    """Mean metric per test-set size for users with identical recommendation quality.

    Item at rank r is relevant with probability ``exp(-decay * r)``; the
    recommended list is the identity ranking. Users with fewer than
    `max_test_size` relevant items are redrawn. Returns rows with keys
    ``test_size, metric, mean, stderr``.
    """
    if max_test_size < 1:
        raise DomainError("max_test_size must be >= 1")
    if catalog_size <= max_test_size:
        raise DomainError("catalog must be larger than the test size")
    g = rngmod.stream(seed, "simulate")
    p_rel = np.exp(-decay * np.arange(1, catalog_size + 1))
    T = max_test_size
    draws = []
    rejected = 0
    have = 0
    while have < n_users:
        rel = g.random((batch, catalog_size)) < p_rel
        ok = rel.sum(axis=1) >= T
        rejected += int((~ok).sum())
        if have == 0 and not ok.any() and rejected >= MAX_REDRAWS:
            raise DomainError(f"no user out of {rejected} draws had {T} relevant items; lower the decay")
        rel = rel[ok][: n_users - have]
        keys = g.random(rel.shape)
        keys[~rel] = np.inf
        draws.append(np.argsort(keys, axis=1, kind="stable")[:, :T] + 1)  # ranks in draw order
        have += len(rel)
    if rejected:
        _log.info("simulation redrew %d users with fewer than %d relevant items", rejected, T)
    ranks = np.concatenate(draws)
    t = np.arange(1, T + 1)
    rows = []
    for spec in metrics:
        inside = ranks <= spec.k
        hits = np.cumsum(inside, axis=1)
        if spec.kind == "hitrate":
            vals = hits.astype(float)
        elif spec.kind == "recall":
            vals = hits / t
        elif spec.kind == "precision":
            vals = hits / spec.k
        else:
            gain = np.where(inside, 1.0 / np.log2(ranks + 1.0), 0.0)
            disc = 1.0 / np.log2(np.arange(2, spec.k + 2))
            idcg = np.cumsum(disc)[np.minimum(t, spec.k) - 1]
            vals = np.cumsum(gain, axis=1) / idcg
        mean = vals.mean(axis=0)
        se = vals.std(axis=0, ddof=1) / math.sqrt(len(vals))
        for ti in range(T):
            rows.append({"test_size": int(t[ti]), "metric": str(spec), "mean": float(mean[ti]), "stderr": float(se[ti])})
    return rows


def default_assignment(dataset: InteractionDataset, plan: SplitPlan) -> FoldAssignment:
    return assign_user_folds(dataset.n_users, plan.k, plan.seed)
