"""Unpersonalised baselines: Random and Popularity."""

import numpy as np

from .. import rng as rngmod
from .base import FittedModel, as_csr


def fit_random(train, seed: int = 0) -> FittedModel:
    n_items = as_csr(train).shape[1]
    return FittedModel("Random", {}, seed, n_items)


def score_random(model, fold_ins) -> np.ndarray:
    # a seeded hash of (seed, fold-in, item): same user history -> same scores
    out = np.empty((len(fold_ins), model.n_items))
    for b, f in enumerate(fold_ins):
        key = np.asarray(sorted(int(x) for x in f), np.int64).tobytes()
        out[b] = rngmod.stream(model.seed, "random-model", key).random(model.n_items)
    return out


def fit_popularity(train, seed: int = 0) -> FittedModel:
    X = as_csr(train)
    counts = np.bincount(X.indices, minlength=X.shape[1]).astype(np.float64)
    return FittedModel("Popularity", {}, seed, X.shape[1], {"counts": counts})


def score_popularity(model, fold_ins) -> np.ndarray:
    return np.broadcast_to(model.state["counts"], (len(fold_ins), model.n_items)).copy()
