"""The fitted-model contract shared by every baseline family."""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Mapping

import numpy as np
import scipy.sparse as sp

from ..data import InteractionDataset
from ..errors import ColdStartError, ContractError

FAMILIES = ("Random", "Popularity", "UserKNN", "ItemKNN", "P3alpha", "RP3beta", "PureSVD", "ALS", "SLIM", "Ease")
# families whose scores do not depend on the fold-in
UNPERSONALIZED = ("Random", "Popularity")


def _freeze(value):
    if isinstance(value, np.ndarray):
        value = value.view()
        value.setflags(write=False)
    elif sp.issparse(value):
        for a in (value.data, value.indices, value.indptr):
            a.setflags(write=False)
    return value


@dataclass(frozen=True)
class FittedModel:
    """Learned state of one baseline. Never holds evaluation users' rows."""

    family: str
    params: Mapping[str, Any]
    seed: int
    n_items: int
    state: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ContractError(f"unknown model family {self.family!r}")
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))
        object.__setattr__(self, "state", MappingProxyType({k: _freeze(v) for k, v in self.state.items()}))


def as_csr(train) -> sp.csr_matrix:
    """Binary CSR view of a training matrix (dataset or scipy sparse)."""
    if isinstance(train, InteractionDataset):
        return train.to_csr()
    m = sp.csr_matrix(train, dtype=np.float64)
    m.sort_indices()
    return m


def fold_in_matrix(fold_ins, n_items: int) -> sp.csr_matrix:
    """Stack fold-in item lists into a binary (n_users, n_items) CSR matrix."""
    lens = [len(x) for x in fold_ins]
    indptr = np.zeros(len(fold_ins) + 1, np.int64)
    np.cumsum(lens, out=indptr[1:])
    idx = np.concatenate([np.asarray(x, np.int64) for x in fold_ins]) if fold_ins else np.zeros(0, np.int64)
    if len(idx) and (idx.min() < 0 or idx.max() >= n_items):
        raise ContractError("fold-in item index out of range")
    return sp.csr_matrix((np.ones(len(idx)), idx, indptr), shape=(len(fold_ins), n_items))


def require_fold_in(model: FittedModel, fold_in) -> None:
    if model.family not in UNPERSONALIZED and len(fold_in) == 0:
        raise ColdStartError(f"{model.family} cannot score an empty fold-in")
