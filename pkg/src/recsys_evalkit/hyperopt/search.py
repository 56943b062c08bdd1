"""Random, grid and Bayesian hyperparameter search with best-so-far traces."""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np
from scipy.optimize import minimize

from .. import rng as rngmod
from ..errors import DomainError, OptimizationError
from .gp import GaussianProcess, expected_improvement
from .space import Categorical, Discrete, SearchSpace

_log = logging.getLogger(__name__)

STRATEGIES = ("bayes", "random", "grid")
DEFAULT_BUDGET = 50
N_INIT = 10
N_CANDIDATES = 1000
N_REFINE = 5
EI_XI = 0.01  # in standardised target units


@dataclass(frozen=True)
class Trial:
    iteration: int
    params: Mapping[str, Any]
    objective: float  # nan when the evaluation failed

    @property
    def failed(self) -> bool:
        return not math.isfinite(self.objective)


@dataclass
class SearchTrace:
    space: SearchSpace
    strategy: str
    trials: list[Trial] = field(default_factory=list)

    @property
    def best_so_far(self) -> np.ndarray:
        vals = np.array([t.objective if not t.failed else -np.inf for t in self.trials])
        run = np.maximum.accumulate(vals) if len(vals) else vals
        return np.where(np.isneginf(run), np.nan, run)

    @property
    def best(self) -> Trial:
        ok = [t for t in self.trials if not t.failed]
        if not ok:
            raise OptimizationError("no successful trials")
        # max objective, earliest iteration on ties
        return max(ok, key=lambda t: (t.objective, -t.iteration))

    @property
    def best_params(self) -> dict:
        return dict(self.best.params)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", *self.space.names, "objective", "best_so_far"])
        for t, b in zip(self.trials, self.best_so_far):
            w.writerow([t.iteration, *[t.params[n] for n in self.space.names], _fmt(t.objective), _fmt(b)])
        return buf.getvalue()


def _fmt(x):
    return "" if not math.isfinite(x) else repr(float(x))


def space_size(space: SearchSpace) -> float:
    """Number of distinct points (inf if any dimension is continuous)."""
    n = 1
    for _, d in space:
        if isinstance(d, (Categorical, Discrete)):
            n *= d.cardinality
        else:
            return math.inf
    return n


def sample_random(space: SearchSpace, rng: np.random.Generator) -> dict:
    return {n: d.sample(rng) for n, d in space}


def grid_sizes(space: SearchSpace, budget: int) -> list[int]:
    """Per-dimension grid sizes: categoricals in full, the rest as equal as fits the budget."""
    if budget < 1:
        raise DomainError("budget must be >= 1")
    dims = list(space)
    sizes = [d.cardinality if isinstance(d, Categorical) else 1 for _, d in dims]
    if math.prod(sizes) > budget:
        raise DomainError(f"categorical combinations ({math.prod(sizes)}) exceed the budget {budget}")
    caps = [d.cardinality if isinstance(d, Discrete) else math.inf for _, d in dims]
    numeric = [i for i, (_, d) in enumerate(dims) if not isinstance(d, Categorical)]
    grew = True
    while grew:
        grew = False
        # grow the smallest dimension first so sizes stay as equal as possible
        for i in sorted(numeric, key=lambda i: (sizes[i], i)):
            if sizes[i] + 1 > caps[i]:
                continue
            trial = sizes.copy()
            trial[i] += 1
            if math.prod(trial) <= budget:
                sizes = trial
                grew = True
                break
    return sizes


def grid_enumerate(space: SearchSpace, budget: int) -> list[dict]:
    """Cartesian product of per-dimension grids, in lexicographic order."""
    sizes = grid_sizes(space, budget)
    axes = [d.grid(s) for (_, d), s in zip(space, sizes)]
    return [dict(zip(space.names, combo)) for combo in itertools.product(*axes)]


def _same(a: Mapping, b: Mapping) -> bool:
    return all(a[k] == b[k] and type(a[k]) is type(b[k]) for k in a)


def bo_suggest(space: SearchSpace, history: list[Trial], rng: np.random.Generator, n_init: int = N_INIT) -> dict:
    """Next point to evaluate: random for the first `n_init`, then max Expected Improvement."""
    ok = [t for t in history if not t.failed]
    if len(history) < n_init or len(ok) < 2 or len(space) == 0:
        return sample_random(space, rng)
    X = np.array([space.encode(t.params) for t in ok])
    y = np.array([t.objective for t in ok])
    try:
        gp = GaussianProcess().fit(X, y)
    except np.linalg.LinAlgError as e:
        _log.warning("GP fit failed (%s); falling back to a random suggestion", e)
        return sample_random(space, rng)

    best = float(y.max())
    xi = EI_XI * gp.y_std_

    def ei(U):
        mu, sd = gp.predict(U)
        return expected_improvement(mu, sd, best, xi)

    cand_params = [sample_random(space, rng) for _ in range(N_CANDIDATES)]
    cand = np.array([space.encode(p) for p in cand_params])
    scores = ei(cand)
    numeric = space.numeric_mask()
    pool = [cand[i] for i in range(len(cand))]
    pool_scores = list(scores)
    if numeric.any():
        for i in np.argsort(-scores, kind="stable")[:N_REFINE]:
            x0 = cand[i].copy()

            def neg_ei(z, x0=x0):
                x = x0.copy()
                x[numeric] = z
                return -float(ei(x[None, :])[0])

            res = minimize(neg_ei, x0[numeric], method="L-BFGS-B", bounds=[(0.0, 1.0)] * int(numeric.sum()), options={"maxiter": 25})
            x = x0.copy()
            x[numeric] = np.clip(res.x, 0.0, 1.0)
            pool.append(x)
            pool_scores.append(-res.fun)
    for i in np.argsort(-np.asarray(pool_scores), kind="stable"):
        params = space.decode(pool[i])
        if not any(_same(params, t.params) for t in history):
            return params
    return sample_random(space, rng)


def optimize(
    objective: Callable[[dict], float],
    space: SearchSpace,
    budget: int = DEFAULT_BUDGET,
    strategy: str = "bayes",
    seed: int = 0,
    n_init: int = N_INIT,
) -> SearchTrace:
    """Maximise `objective` over `space` with at most `budget` evaluations.

    Failed evaluations (exceptions or non-finite values) are recorded as NaN and
    never selected.
    """
    if budget < 1:
        raise DomainError("budget must be >= 1")
    if strategy not in STRATEGIES:
        raise DomainError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    rng = rngmod.stream(seed, "search", strategy)
    trace = SearchTrace(space, strategy)
    if strategy == "grid":
        plan = grid_enumerate(space, budget)
        n = len(plan)
    else:
        plan = None
        n = int(min(budget, space_size(space)))
    for it in range(n):
        if plan is not None:
            params = plan[it]
        elif strategy == "random":
            params = sample_random(space, rng)
        else:
            params = bo_suggest(space, trace.trials, rng, n_init)
        try:
            value = float(objective(dict(params)))
        except Exception as e:  # a failed trial must not end the search
            _log.warning("trial %d failed: %r", it, e)
            value = math.nan
        if not math.isfinite(value):
            value = math.nan
        trace.trials.append(Trial(it, dict(params), value))
    if all(t.failed for t in trace.trials):
        raise OptimizationError(f"all {len(trace.trials)} trials failed")
    return trace


def normalized_traces(traces: list[SearchTrace], reference: float | None = None) -> list[np.ndarray]:
    """Best-so-far divided by the best score over all given traces (or `reference`)."""
    ref = reference if reference is not None else max(t.best.objective for t in traces)
    if not ref > 0:
        raise DomainError("normalisation needs a positive best score")
    return [t.best_so_far / ref for t in traces]


def average_traces(curves: list[np.ndarray], length: int | None = None) -> np.ndarray:
    """Mean of normalised curves, each padded with its last value to `length`."""
    length = length or max(len(c) for c in curves)
    padded = np.array([np.concatenate([c, np.full(length - len(c), c[-1])])[:length] for c in curves])
    return np.nanmean(padded, axis=0)
