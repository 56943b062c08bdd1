"""Linear item-item baselines: SLIM (elastic net) and Ease (closed form)."""

import logging
import os
import warnings

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .. import kernels
from ..errors import ConvergenceWarning, ResourceError
from .base import FittedModel, as_csr, fold_in_matrix

_log = logging.getLogger(__name__)

SLIM_TOL = 1e-4
SLIM_MAX_SWEEPS = 100

# bytes; Ease needs a few dense n_items x n_items float64 matrices
MEMORY_BUDGET = int(os.environ.get("EVALKIT_MEMORY_BUDGET", 8 * 2**30))


def fit_slim(train, params: dict, seed: int = 0, positive=True, tol=SLIM_TOL, max_sweeps=SLIM_MAX_SWEEPS, backend=None) -> FittedModel:
    """Per-column elastic net with zero diagonal.

    Column j minimises ``0.5 |x_j - X w|^2 + l1 |w|_1 + 0.5 l2 |w|^2`` subject
    to ``w_j = 0`` and, by default, ``w >= 0``.
    """
    X = as_csr(train)
    l1 = float(params["l1"])
    l2 = float(params["l2"])
    n = X.shape[1]
    gram = (X.T @ X).toarray()
    cols, rows, vals = [], [], []
    stalled = 0
    for j in range(n):
        w, sweeps = kernels.slim_column(gram, j, l1, l2, positive, tol, max_sweeps, backend)
        if sweeps >= max_sweeps:
            stalled += 1
        nz = np.flatnonzero(w)
        rows.append(nz)
        cols.append(np.full(len(nz), j))
        vals.append(w[nz])
    if stalled:
        warnings.warn(f"SLIM: {stalled} columns hit the {max_sweeps}-sweep limit", ConvergenceWarning, stacklevel=2)
    W = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    W.sort_indices()
    return FittedModel("SLIM", dict(params), seed, n, {"W": W})


def ease_weights(gram, lmbda: float) -> np.ndarray:
    """``B = I - P diag(1 / diag(P))`` with ``P = (G + lmbda I)^-1``; diag(B) = 0."""
    n = gram.shape[0]
    G = np.array(gram, dtype=np.float64)
    G[np.diag_indices(n)] += lmbda
    P = sla.cho_solve(sla.cho_factor(G, lower=True, check_finite=False), np.eye(n), check_finite=False)
    B = -P / np.diag(P)[None, :]
    B[np.diag_indices(n)] = 0.0
    return B


def fit_ease(train, params: dict, seed: int = 0, memory_budget: int | None = None) -> FittedModel:
    X = as_csr(train)
    n = X.shape[1]
    budget = MEMORY_BUDGET if memory_budget is None else memory_budget
    need = 3 * n * n * 8
    if need > budget:
        raise ResourceError(f"Ease needs ~{need / 2**30:.1f} GiB for {n} items (budget {budget / 2**30:.1f} GiB)")
    B = ease_weights((X.T @ X).toarray(), float(params["lmbda"]))
    return FittedModel("Ease", dict(params), seed, n, {"W": B})


def score_linear(model, fold_ins):
    F = fold_in_matrix(fold_ins, model.n_items)
    W = model.state["W"]
    out = F @ W
    return np.asarray(out.todense()) if sp.issparse(out) else np.asarray(out)
