"""Patient-grouped K-fold partitioning."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: dict  # group_id -> fold index

    def __post_init__(self):
        used = set(self.assignments.values())
        if used != set(range(self.k)):
            raise ConfigError("every fold must be non-empty and indices must run 0..k-1")

    def fold_of(self, groups) -> np.ndarray:
        return np.array([self.assignments[g] for g in groups], dtype=int)

    def splits(self, groups):
        """Yield ``(train_rows, test_rows)`` per fold."""
        f = self.fold_of(groups)
        for i in range(self.k):
            yield np.flatnonzero(f != i), np.flatnonzero(f == i)


def plan_group_kfold(groups, k: int = 5, seed: int = 0) -> FoldPlan:
    """Assign whole groups to k folds.

    Groups are shuffled by ``seed``, then placed largest-first (stable among
    equal sizes) into the fold with the fewest rows so far, lowest index on
    ties. With fewer distinct groups than ``k``, k shrinks to the group count
    (minimum 2) with a warning.
    """
    groups = list(groups)
    uniq, counts = np.unique(np.asarray(groups, dtype=object), return_counts=True)
    n_groups = len(uniq)
    if n_groups < 2:
        raise ConfigError("group k-fold needs at least two distinct groups")
    if k < 2:
        raise ConfigError("k must be >= 2")
    if n_groups < k:
        log.warning("only %d groups for k=%d; reducing k", n_groups, k)
        k = n_groups
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_groups)
    order = perm[np.argsort(-counts[perm], kind="stable")]
    loads = np.zeros(k, dtype=int)
    assign = {}
    for gi in order:
        f = int(np.argmin(loads))
        assign[uniq[gi]] = f
        loads[f] += counts[gi]
    if loads.max() > 2 * max(1, loads.min()):
        log.info("fold row counts are imbalanced: %s", loads.tolist())
    return FoldPlan(k, assign)
