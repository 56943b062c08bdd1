"""Factorisation baselines: PureSVD and implicit ALS with a fold-in step."""

import logging

import numpy as np

from .. import kernels
from .. import rng as rngmod
from ..errors import EvalkitError
from .base import FittedModel, as_csr, fold_in_matrix

_log = logging.getLogger(__name__)

EXACT_SVD_MAX_ITEMS = 2000
SVD_POWER_ITERS = 2
SVD_OVERSAMPLES = 10

ALS_ITERATIONS = 15
ALS_CONFIDENCE = 1.0  # c_ui = 1 + ALS_CONFIDENCE * x_ui


class NumericalError(EvalkitError, ArithmeticError):
    pass


def randomized_svd(X, n_factors, seed, power_iters=SVD_POWER_ITERS, oversamples=SVD_OVERSAMPLES):
    """Truncated SVD by a seeded Gaussian range finder with power iterations."""
    n_items = X.shape[1]
    width = min(n_factors + oversamples, min(X.shape))
    omega = rngmod.stream(seed, "puresvd").standard_normal((n_items, width))
    Q, _ = np.linalg.qr(X @ omega)
    for _ in range(power_iters):
        Z, _ = np.linalg.qr(X.T @ Q)
        Q, _ = np.linalg.qr(X @ Z)
    B = np.asarray(X.T @ Q).T
    _, s, vt = np.linalg.svd(B, full_matrices=False)
    return s[:n_factors], vt[:n_factors]


def fit_puresvd(train, params: dict, seed: int = 0) -> FittedModel:
    X = as_csr(train)
    n_factors = int(params["n_factors"])
    cap = min(X.shape)
    if n_factors > cap:
        _log.warning("PureSVD: n_factors=%d exceeds rank bound %d, capping", n_factors, cap)
        n_factors = cap
    if n_factors < 1:
        raise ValueError("n_factors must be >= 1")
    if X.shape[1] <= EXACT_SVD_MAX_ITEMS:
        _, s, vt = np.linalg.svd(X.toarray(), full_matrices=False)
        s, vt = s[:n_factors], vt[:n_factors]
    else:
        s, vt = randomized_svd(X, n_factors, seed)
    return FittedModel("PureSVD", dict(params), seed, X.shape[1], {"V": np.ascontiguousarray(vt.T), "singular_values": s})


def score_puresvd(model, fold_ins):
    F = fold_in_matrix(fold_ins, model.n_items)
    V = model.state["V"]
    return np.asarray((F @ V) @ V.T)


def als_objective(X, U, Y, reg, weight=ALS_CONFIDENCE) -> float:
    """``sum c_ui (x_ui - u'y)^2 + reg (|U|^2 + |Y|^2)`` for binary X, c = 1 + weight x."""
    X = as_csr(X)
    full = float(np.sum((U.T @ U) * (Y.T @ Y)))  # |U Y'|_F^2
    rows = np.repeat(np.arange(X.shape[0]), np.diff(X.indptr))
    s = np.einsum("ij,ij->i", U[rows], Y[X.indices])
    observed = float(np.sum((1.0 + weight) * (1.0 - s) ** 2 - s**2))
    return full + observed + reg * (float(np.sum(U * U)) + float(np.sum(Y * Y)))


def als_train(X, n_factors, reg, iterations=ALS_ITERATIONS, weight=ALS_CONFIDENCE, seed=0, trace=False, backend=None):
    """Alternating exact ridge solves. Returns ``(U, Y, objectives)``.

    With ``trace=True`` the objective is recorded after every half sweep.
    """
    X = as_csr(X)
    Xt = X.T.tocsr()
    Xt.sort_indices()
    Y = 0.01 * rngmod.stream(seed, "als-init").standard_normal((X.shape[1], n_factors))
    U = np.zeros((X.shape[0], n_factors))
    history = []
    try:
        for _ in range(iterations):
            U = kernels.als_half_sweep(X.indptr, X.indices, Y, reg, weight, backend)
            if trace:
                history.append(als_objective(X, U, Y, reg, weight))
            Y = kernels.als_half_sweep(Xt.indptr, Xt.indices, U, reg, weight, backend)
            if trace:
                history.append(als_objective(X, U, Y, reg, weight))
    except np.linalg.LinAlgError as e:
        cond = np.linalg.cond(Y.T @ Y + reg * np.eye(n_factors))
        raise NumericalError(f"ALS solve failed ({e}); cond(Y'Y + reg I) = {cond:.3g}") from e
    return U, Y, history


def fit_als(train, params: dict, seed: int = 0, iterations=ALS_ITERATIONS, weight=ALS_CONFIDENCE) -> FittedModel:
    X = as_csr(train)
    n_factors = int(params["n_factors"])
    reg = float(params["regularization"])
    _, Y, _ = als_train(X, n_factors, reg, iterations, weight, seed)
    return FittedModel("ALS", dict(params), seed, X.shape[1], {"Y": Y, "YtY": Y.T @ Y, "weight": np.float64(weight)})


def score_als(model, fold_ins):
    F = fold_in_matrix(fold_ins, model.n_items)
    Y = model.state["Y"]
    reg = float(model.params["regularization"])
    weight = float(model.state["weight"])
    try:
        U = kernels.als_half_sweep(F.indptr, F.indices, Y, reg, weight)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"ALS fold-in solve failed: {e}") from e
    return U @ Y.T
