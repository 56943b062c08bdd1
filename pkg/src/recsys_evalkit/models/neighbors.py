"""Neighbourhood baselines: UserKNN, ItemKNN, P3alpha and RP3beta."""

import logging

import numpy as np
import scipy.sparse as sp

from .base import FittedModel, as_csr, fold_in_matrix

_log = logging.getLogger(__name__)

_BLOCK = 1024


def top_k_per_row(dense, k: int, positive_only: bool = True) -> sp.csr_matrix:
    """Keep the `k` largest entries of every row (ties by lower column index)."""
    n_rows, n_cols = dense.shape
    k = min(k, n_cols)
    order = np.argsort(-dense, axis=1, kind="stable")[:, :k]
    rows = np.repeat(np.arange(n_rows), k)
    cols = order.ravel()
    vals = dense[rows, cols]
    keep = vals > 0 if positive_only else vals != 0
    m = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=dense.shape)
    m.sort_indices()
    return m


def asym_cosine(dot, norm_x, norm_y, alpha: float, shrink: float):
    """``<x,y> / (|x|^(2 alpha) |y|^(2 (1 - alpha)) + shrink)`` from squared norms."""
    denom = np.power(norm_x, alpha)[:, None] * np.power(norm_y, 1.0 - alpha)[None, :] + shrink
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(denom > 0, dot / denom, 0.0)
    return out


def _knn_params(params):
    return params.get("weighting", "similarity"), int(params["k"]), float(params.get("lambda", 0.0)), float(params.get("alpha", 0.5))


def fit_knn(train, variant: str, params: dict, seed: int = 0) -> FittedModel:
    weighting, k, shrink, alpha = _knn_params(params)
    if k < 1:
        raise ValueError("k must be >= 1")
    X = as_csr(train)
    sq = np.asarray(X.multiply(X).sum(axis=0)).ravel() if variant == "item" else np.asarray(X.multiply(X).sum(axis=1)).ravel()
    if variant == "user":
        family = "UserKNN"
        state = {"train": X, "sq_norms": sq}
    elif variant == "item":
        family = "ItemKNN"
        # W[i, j]: weight of fold-in item i for target item j (top-k neighbours per target)
        co = (X.T @ X).toarray()
        sim = asym_cosine(co, sq, sq, alpha, shrink)  # sim[j, i]: target j, neighbour i
        np.fill_diagonal(sim, 0.0)
        W = top_k_per_row(sim, k).T.tocsr()
        if weighting == "uniform":
            W.data[:] = 1.0
        W.sort_indices()
        state = {"W": W}
    else:
        raise ValueError(f"unknown knn variant {variant!r}")
    return FittedModel(family, dict(params), seed, X.shape[1], state)


def score_itemknn(model, fold_ins):
    F = fold_in_matrix(fold_ins, model.n_items)
    return np.asarray((F @ model.state["W"]).todense())


def score_userknn(model, fold_ins):
    weighting, k, shrink, alpha = _knn_params(model.params)
    X = model.state["train"]
    out = np.empty((len(fold_ins), model.n_items))
    for lo in range(0, len(fold_ins), _BLOCK):
        F = fold_in_matrix(fold_ins[lo : lo + _BLOCK], model.n_items)
        dots = np.asarray((F @ X.T).todense())
        f_sq = np.asarray(F.sum(axis=1)).ravel()
        sim = asym_cosine(dots, f_sq, model.state["sq_norms"], alpha, shrink)
        nbrs = top_k_per_row(sim, k)
        if weighting == "uniform":
            nbrs.data[:] = 1.0
        out[lo : lo + F.shape[0]] = np.asarray((nbrs @ X).todense())
    return out


def random_walk_matrix(train, alpha: float = 1.0, beta: float = 0.0) -> np.ndarray:
    """Dense item->user->item transition matrix with elementwise powers and popularity penalty."""
    X = as_csr(train)
    deg_u = np.asarray(X.sum(axis=1)).ravel()
    deg_i = np.asarray(X.sum(axis=0)).ravel()
    if np.any(deg_i == 0):
        _log.debug("random walk on a graph with %d isolated items", int((deg_i == 0).sum()))
    with np.errstate(divide="ignore"):
        inv_u = np.where(deg_u > 0, 1.0 / deg_u, 0.0)
        inv_i = np.where(deg_i > 0, 1.0 / deg_i, 0.0)
    P_ui = sp.diags(inv_u) @ X  # user -> item
    P_iu = (sp.diags(inv_i) @ X.T).tocsr()  # item -> user
    P_ui = P_ui.tocsr()
    if alpha != 1.0:
        P_ui.data = np.power(P_ui.data, alpha)
        P_iu.data = np.power(P_iu.data, alpha)
    W = (P_iu @ P_ui).toarray()
    if beta != 0.0:
        with np.errstate(divide="ignore"):
            W = W / np.where(deg_i > 0, np.power(deg_i, beta), 1.0)[None, :]
    return W


def fit_graph_walk(train, variant: str, params: dict, seed: int = 0) -> FittedModel:
    alpha = float(params.get("alpha", 1.0))
    k = params.get("k")
    normalize = bool(params.get("normalize_similarity", False))
    if variant == "p3alpha":
        family, beta = "P3alpha", 0.0
    elif variant == "rp3beta":
        family, beta = "RP3beta", float(params.get("beta", 0.0))
    else:
        raise ValueError(f"unknown graph-walk variant {variant!r}")
    X = as_csr(train)
    W = random_walk_matrix(X, alpha, beta)
    W = top_k_per_row(W, int(k)) if k is not None else sp.csr_matrix(W)
    if normalize:
        sums = np.asarray(W.sum(axis=1)).ravel()
        W = (sp.diags(np.where(sums > 0, 1.0 / np.where(sums > 0, sums, 1.0), 0.0)) @ W).tocsr()
    W.sort_indices()
    return FittedModel(family, dict(params), seed, X.shape[1], {"W": W})


def score_item_item(model, fold_ins):
    F = fold_in_matrix(fold_ins, model.n_items)
    W = model.state["W"]
    if sp.issparse(W):
        return np.asarray((F @ W).todense())
    return np.asarray(F @ W)
