"""User-inductive baselines behind one fit/score contract.

Every family is fit on a training matrix only and scores an unseen user from
their fold-in items::

    model = fit_model("Ease", train, {"lmbda": 200.0})
    s = score(model, fold_in_items)   # one score per item
"""

from __future__ import annotations

import logging
from typing import Any, Mapping

import numpy as np
import scipy.sparse as sp

from .. import __version__
from ..arrays import load_arrays, save_arrays
from ..errors import ColdStartError, ContractError
from ..hyperopt.space import Categorical, Continuous, Discrete, LogContinuous, SearchSpace
from .base import FAMILIES, UNPERSONALIZED, FittedModel, as_csr, require_fold_in
from .basic import fit_popularity, fit_random, score_popularity, score_random
from .factor import als_objective, als_train, fit_als, fit_puresvd, score_als, score_puresvd
from .linear import ease_weights, fit_ease, fit_slim, score_linear
from .neighbors import asym_cosine, fit_graph_walk, fit_knn, random_walk_matrix, score_item_item, score_itemknn, score_userknn

_log = logging.getLogger(__name__)

_KNN_SPACE = SearchSpace(
    [
        ("weighting", Categorical(("uniform", "similarity"))),
        ("k", Discrete(1, 500)),
        ("lambda", LogContinuous(0.1, 1000.0)),
        ("alpha", Continuous(0.1, 0.9)),
    ]
)

SEARCH_SPACES: dict[str, SearchSpace] = {
    "Random": SearchSpace(),
    "Popularity": SearchSpace(),
    "UserKNN": _KNN_SPACE,
    "ItemKNN": _KNN_SPACE,
    "P3alpha": SearchSpace(
        [
            ("normalize_similarity", Categorical((True, False))),
            ("alpha", Continuous(0.0, 2.0)),
            ("k", Discrete(5, 1000)),
        ]
    ),
    "RP3beta": SearchSpace(
        [
            ("normalize_similarity", Categorical((True, False))),
            ("alpha", Continuous(0.0, 2.0)),
            ("beta", Continuous(0.0, 2.0)),
            ("k", Discrete(5, 1000)),
        ]
    ),
    "PureSVD": SearchSpace([("n_factors", Discrete(16, 512))]),
    "ALS": SearchSpace([("n_factors", Discrete(16, 512)), ("regularization", Continuous(1e-06, 200))]),
    "SLIM": SearchSpace([("l1", LogContinuous(0.1, 10000)), ("l2", LogContinuous(0.1, 10000))]),
    "Ease": SearchSpace([("lmbda", Continuous(1, 1000))]),
}

_FIT = {
    "Random": lambda X, p, s: fit_random(X, s),
    "Popularity": lambda X, p, s: fit_popularity(X, s),
    "UserKNN": lambda X, p, s: fit_knn(X, "user", p, s),
    "ItemKNN": lambda X, p, s: fit_knn(X, "item", p, s),
    "P3alpha": lambda X, p, s: fit_graph_walk(X, "p3alpha", p, s),
    "RP3beta": lambda X, p, s: fit_graph_walk(X, "rp3beta", p, s),
    "PureSVD": lambda X, p, s: fit_puresvd(X, p, s),
    "ALS": lambda X, p, s: fit_als(X, p, s),
    "SLIM": lambda X, p, s: fit_slim(X, p, s),
    "Ease": lambda X, p, s: fit_ease(X, p, s),
}

_SCORE = {
    "Random": score_random,
    "Popularity": score_popularity,
    "UserKNN": score_userknn,
    "ItemKNN": score_itemknn,
    "P3alpha": score_item_item,
    "RP3beta": score_item_item,
    "PureSVD": score_puresvd,
    "ALS": score_als,
    "SLIM": score_linear,
    "Ease": score_linear,
}


def fit_model(family: str, train, params: Mapping[str, Any] | None = None, seed: int = 0, validate: bool = True) -> FittedModel:
    """Fit `family` on a training matrix (InteractionDataset or scipy sparse)."""
    if family not in _FIT:
        raise ContractError(f"unknown model family {family!r}; choose from {FAMILIES}")
    params = dict(params or {})
    if validate:
        SEARCH_SPACES[family].validate(params)
    return _FIT[family](as_csr(train), params, seed)


def score(model: FittedModel, fold_in) -> np.ndarray:
    """Scores for every item given one user's fold-in item indices."""
    fold_in = np.asarray(fold_in, np.int64)
    require_fold_in(model, fold_in)
    return score_batch(model, [fold_in])[0]


def score_batch(model: FittedModel, fold_ins, fallback: FittedModel | None = None) -> np.ndarray:
    """Score a block of users; empty fold-ins use `fallback` (e.g. Popularity) if given."""
    if model.family not in _SCORE:
        raise ContractError(f"no scorer for family {model.family!r}")
    fold_ins = [np.asarray(f, np.int64) for f in fold_ins]
    if model.family in UNPERSONALIZED:
        return _SCORE[model.family](model, fold_ins)
    empty = [b for b, f in enumerate(fold_ins) if len(f) == 0]
    if not empty:
        return _SCORE[model.family](model, fold_ins)
    if fallback is None:
        raise ColdStartError(f"{len(empty)} users with empty fold-in and no fallback model")
    _log.warning("%d cold-start users scored by %s", len(empty), fallback.family)
    out = np.empty((len(fold_ins), model.n_items))
    warm = [b for b in range(len(fold_ins)) if len(fold_ins[b])]
    if warm:
        out[warm] = _SCORE[model.family](model, [fold_ins[b] for b in warm])
    out[empty] = score_batch(fallback, [fold_ins[b] for b in empty])
    return out


# ---------------------------------------------------------------------------
# serialization

MODEL_FORMAT = "recsys-evalkit-model"
MODEL_FORMAT_VERSION = 1


def save_model(model: FittedModel, path) -> None:
    arrays = {}
    kinds = {}
    for name, value in model.state.items():
        if sp.issparse(value):
            m = sp.csr_matrix(value)
            arrays[f"{name}.data"] = m.data
            arrays[f"{name}.indices"] = m.indices
            arrays[f"{name}.indptr"] = m.indptr
            arrays[f"{name}.shape"] = np.asarray(m.shape, np.int64)
            kinds[name] = "csr"
        else:
            arrays[name] = np.asarray(value)
            kinds[name] = "dense"
    meta = {
        "format": MODEL_FORMAT,
        "format_version": MODEL_FORMAT_VERSION,
        "toolkit_version": __version__,
        "family": model.family,
        "params": dict(model.params),
        "seed": model.seed,
        "n_items": model.n_items,
        "state": kinds,
    }
    save_arrays(path, arrays, meta)


def load_model(path) -> FittedModel:
    arrays, meta = load_arrays(path)
    if not meta or meta.get("format") != MODEL_FORMAT:
        raise ContractError(f"{path} is not a saved model")
    if meta["format_version"] != MODEL_FORMAT_VERSION:
        raise ContractError(f"unsupported model format version {meta['format_version']}")
    state = {}
    for name, kind in meta["state"].items():
        if kind == "csr":
            state[name] = sp.csr_matrix(
                (arrays[f"{name}.data"], arrays[f"{name}.indices"], arrays[f"{name}.indptr"]),
                shape=tuple(arrays[f"{name}.shape"]),
            )
        else:
            a = arrays[name]
            state[name] = a[()] if a.ndim == 0 else a
    return FittedModel(meta["family"], meta["params"], meta["seed"], meta["n_items"], state)


__all__ = [
    "FAMILIES",
    "SEARCH_SPACES",
    "FittedModel",
    "fit_model",
    "score",
    "score_batch",
    "save_model",
    "load_model",
    "fit_random",
    "fit_popularity",
    "fit_knn",
    "fit_graph_walk",
    "fit_puresvd",
    "fit_als",
    "fit_slim",
    "fit_ease",
    "als_train",
    "als_objective",
    "ease_weights",
    "asym_cosine",
    "random_walk_matrix",
]
