import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clinbp.errors import ConfigError
from clinbp.evaluate.folds import FoldPlan, plan_group_kfold


def check_partition(groups, plan):
    folds = plan.fold_of(groups)
    seen = {}
    for g, f in zip(groups, folds):
        assert seen.setdefault(g, f) == f
    tests = np.concatenate([te for _, te in plan.splits(groups)])
    assert np.array_equal(np.sort(tests), np.arange(len(groups)))
    for tr, te in plan.splits(groups):
        assert not set(np.asarray(groups, dtype=object)[tr]) & set(np.asarray(groups, dtype=object)[te])


def test_ten_groups_five_folds():
    groups = [f"g{i % 10}" for i in range(50)]
    plan = plan_group_kfold(groups, 5, seed=1)
    check_partition(groups, plan)
    assert plan.k == 5
    _, counts = np.unique(plan.fold_of(groups), return_counts=True)
    assert list(counts) == [10] * 5


def test_dominant_group_alone():
    groups = ["big"] * 90 + [f"s{i}" for i in range(10)]
    plan = plan_group_kfold(groups, 5)
    f = plan.assignments["big"]
    assert [g for g, v in plan.assignments.items() if v == f] == ["big"]


def test_leave_one_group_out():
    groups = ["a", "b", "c", "d", "a", "b"]
    plan = plan_group_kfold(groups, 4)
    assert sorted(plan.assignments.values()) == [0, 1, 2, 3]


def test_fewer_groups_reduce_k():
    plan = plan_group_kfold(["a", "b", "c"] * 4, 5)
    assert plan.k == 3


def test_errors():
    with pytest.raises(ConfigError):
        plan_group_kfold(["a"] * 5, 5)
    with pytest.raises(ConfigError):
        plan_group_kfold(["a", "b"], 1)
    with pytest.raises(ConfigError):
        FoldPlan(3, {"a": 0, "b": 1})


def test_seed_changes_plan_but_is_reproducible():
    groups = [f"g{i}" for i in range(40)]
    assert plan_group_kfold(groups, 5, 3) == plan_group_kfold(groups, 5, 3)
    assert plan_group_kfold(groups, 5, 3) != plan_group_kfold(groups, 5, 4)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 30), min_size=2, max_size=200), st.integers(2, 8), st.integers(0, 1000))
def test_partition_property(labels, k, seed):
    groups = [f"p{v}" for v in labels]
    if len(set(groups)) < 2:
        return
    plan = plan_group_kfold(groups, k, seed)
    assert plan.k == min(k, len(set(groups)))
    check_partition(groups, plan)
