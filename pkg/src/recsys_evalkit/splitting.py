"""User-inductive cross-validation folds and hold-n-out profile splits.

Every random choice is keyed by ``(seed, user_token)`` so a user's split does
not depend on which other users are present.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .data import InteractionDataset
from .errors import ContractError, DegenerateFoldError, DomainError, IneligibleProfileError

_log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitPlan:
    k: int = 5
    seed: int = 0
    n_val: int = 1
    n_test: int = 1
    temporal: bool = False

    def __post_init__(self):
        if self.k < 2:
            raise DomainError(f"need at least 2 folds, got k={self.k}")
        if self.n_val < 0 or self.n_test < 1:
            raise DomainError("need n_val >= 0 and n_test >= 1")

    @property
    def min_profile(self) -> int:
        return self.n_val + self.n_test + 1


@dataclass(frozen=True)
class FoldAssignment:
    fold_of_user: np.ndarray
    k: int
    seed: int

    def users_in(self, fold) -> np.ndarray:
        return np.flatnonzero(self.fold_of_user == fold)

    def users_in_any(self, folds) -> np.ndarray:
        return np.flatnonzero(np.isin(self.fold_of_user, list(folds)))

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold_of_user, minlength=self.k)


@dataclass(frozen=True)
class ProfileSplit:
    fold_in: np.ndarray
    val_items: np.ndarray
    test_items: np.ndarray

    def history(self) -> np.ndarray:
        """Fold-in plus validation items: the input when scoring the test items."""
        return np.union1d(self.fold_in, self.val_items)


@dataclass(frozen=True)
class FoldData:
    train_matrix: InteractionDataset
    train_users: np.ndarray
    eval_users: list[tuple[int, ProfileSplit]] = field(default_factory=list)


def assign_user_folds(n_users: int, k: int, seed: int) -> FoldAssignment:
    """Deal a seeded permutation of users round-robin into `k` folds."""
    if k < 2:
        raise DomainError(f"need at least 2 folds, got k={k}")
    if n_users < k:
        raise DomainError(f"{n_users} users cannot fill {k} folds")
    perm = rngmod.stream(seed, "folds", n_users, k).permutation(n_users)
    fold = np.empty(n_users, np.int64)
    fold[perm] = np.arange(n_users) % k
    fold.setflags(write=False)
    return FoldAssignment(fold, k, seed)


def partition_profile(profile, n_val: int, n_test: int, rng: np.random.Generator) -> ProfileSplit:
    """Hold out `n_test`, then `n_val` items uniformly at random; the rest is fold-in."""
    profile = np.asarray(profile, np.int64)
    if len(profile) < n_val + n_test + 1:
        raise IneligibleProfileError(f"profile of {len(profile)} items cannot hold out {n_val}+{n_test} and keep a fold-in")
    picked = rng.choice(len(profile), size=n_test + n_val, replace=False)
    test = np.sort(profile[picked[:n_test]])
    val = np.sort(profile[picked[n_test:]])
    rest = np.ones(len(profile), bool)
    rest[picked] = False
    return ProfileSplit(profile[rest], val, test)


def partition_profile_temporal(profile, timestamps, n_val: int, n_test: int) -> ProfileSplit:
    """Latest items go to test, the next latest to validation (ties by item index)."""
    profile = np.asarray(profile, np.int64)
    if len(profile) < n_val + n_test + 1:
        raise IneligibleProfileError(f"profile of {len(profile)} items too short")
    order = np.lexsort((-profile, -np.asarray(timestamps)))  # newest first
    test = np.sort(profile[order[:n_test]])
    val = np.sort(profile[order[n_test : n_test + n_val]])
    return ProfileSplit(np.sort(profile[order[n_test + n_val :]]), val, test)


def split_user(dataset: InteractionDataset, user: int, plan: SplitPlan) -> ProfileSplit:
    profile = dataset.user_items(user)
    if plan.temporal and dataset.timestamps is not None:
        ts = dataset.timestamps[dataset.indptr[user] : dataset.indptr[user + 1]]
        return partition_profile_temporal(profile, ts, plan.n_val, plan.n_test)
    return partition_profile(profile, plan.n_val, plan.n_test, rngmod.user_stream(plan.seed, dataset.user_tokens[user]))


def build_fold_data(dataset: InteractionDataset, assignment: FoldAssignment, eval_fold: int, plan: SplitPlan, train_folds=None) -> FoldData:
    """Full training rows for `train_folds` and profile splits for `eval_fold`.

    `train_folds` defaults to every fold except `eval_fold`.
    """
    if not 0 <= eval_fold < assignment.k:
        raise DomainError(f"eval fold {eval_fold} outside 0..{assignment.k - 1}")
    if len(assignment.fold_of_user) != dataset.n_users:
        raise ContractError("fold assignment does not match the dataset's users")
    if train_folds is None:
        train_folds = [f for f in range(assignment.k) if f != eval_fold]
    if eval_fold in train_folds:
        raise ContractError("eval fold cannot also be a training fold")
    train_users = assignment.users_in_any(train_folds)
    eval_users = []
    skipped = 0
    for u in assignment.users_in(eval_fold):
        if len(dataset.user_items(u)) < plan.min_profile:
            skipped += 1
            continue
        eval_users.append((int(u), split_user(dataset, u, plan)))
    if skipped:
        _log.warning("fold %d: skipped %d users with profiles shorter than %d", eval_fold, skipped, plan.min_profile)
    if not eval_users:
        raise DegenerateFoldError(f"fold {eval_fold} has no eligible users")
    return FoldData(dataset.select_users(train_users), train_users, eval_users)


def inner_folds(k: int, eval_fold: int) -> tuple[list[int], int]:
    """Inner (train folds, validation fold) within the outer training folds.

    The remaining folds in label order: all but the last train, the last validates.
    """
    rest = [f for f in range(k) if f != eval_fold]
    return rest[:-1], rest[-1]


# ---------------------------------------------------------------------------
# manifests


def split_manifest(dataset: InteractionDataset, assignment: FoldAssignment, plan: SplitPlan) -> dict:
    held_out = {}
    for u in range(dataset.n_users):
        if len(dataset.user_items(u)) < plan.min_profile:
            continue
        ps = split_user(dataset, u, plan)
        held_out[str(u)] = {"val": ps.val_items.tolist(), "test": ps.test_items.tolist()}
    return {
        "seed": plan.seed,
        "k": plan.k,
        "n_val": plan.n_val,
        "n_test": plan.n_test,
        "temporal": plan.temporal,
        "fold_of_user": assignment.fold_of_user.tolist(),
        "held_out": held_out,
    }


def dump_manifest(manifest: dict, path) -> None:
    with open(path, "w") as f:
        json.dump(manifest, f, sort_keys=True, separators=(",", ":"))
        f.write("\n")


def splits_from_manifest(dataset: InteractionDataset, manifest: dict) -> tuple[SplitPlan, FoldAssignment, dict[int, ProfileSplit]]:
    """Rebuild the plan, assignment and per-user splits from an exported manifest."""
    plan = SplitPlan(k=manifest["k"], seed=manifest["seed"], n_val=manifest["n_val"], n_test=manifest["n_test"], temporal=manifest.get("temporal", False))
    fold = np.asarray(manifest["fold_of_user"], np.int64)
    if len(fold) != dataset.n_users:
        raise ContractError("manifest does not match the dataset's users")
    fold.setflags(write=False)
    splits = {}
    for key, ho in manifest["held_out"].items():
        u = int(key)
        val = np.asarray(ho["val"], np.int64)
        test = np.asarray(ho["test"], np.int64)
        profile = dataset.user_items(u)
        fold_in = np.setdiff1d(profile, np.concatenate([val, test]))
        splits[u] = ProfileSplit(fold_in, val, test)
    return plan, FoldAssignment(fold, plan.k, plan.seed), splits
