"""Random forest regression over CART trees."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..parallel import parallel_map
from .params import TreeParams
from .tree import RegressionTree, fit_tree, presort


@dataclass
class RandomForestModel:
    trees: list[RegressionTree]

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        out = np.zeros(X.shape[0])
        for t in self.trees:
            out += t.predict(X)
        return out / len(self.trees)

    def to_dict(self) -> dict:
        return {"kind": "forest", "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d) -> "RandomForestModel":
        return cls([RegressionTree.from_dict(t) for t in d["trees"]])


def fit_random_forest(
    X, y, params: TreeParams, bootstrap: bool = True, order=None, threads: int = 1
) -> RandomForestModel:
    """Average of ``n_estimators`` trees, each on a bootstrap sample with
    ``feature_fraction`` of the features drawn at every split.

    Tree t uses the t-th child of ``SeedSequence(params.seed)``, so the
    result does not depend on ``threads``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    if order is None:
        order = presort(X)
    seqs = np.random.SeedSequence(params.seed).spawn(params.n_estimators)

    def one(seq):
        rng = np.random.default_rng(seq)
        w = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(float) if bootstrap else None
        tree_seed = int(rng.integers(0, 2**31 - 1))
        return fit_tree(
            X, y,
            max_depth=params.max_depth,
            min_samples_leaf=params.min_samples_leaf,
            feature_fraction=params.feature_fraction,
            seed=tree_seed,
            sample_weight=w,
            order=order,
        )

    return RandomForestModel(parallel_map(one, seqs, threads))
