"""Least-squares gradient boosting over CART trees."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import TreeParams
from .tree import RegressionTree, fit_tree, presort


@dataclass
class GradientBoostingModel:
    init: float
    learning_rate: float
    trees: list[RegressionTree]
    train_loss: list[float] = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        out = np.full(X.shape[0], self.init)
        for t in self.trees:
            out += self.learning_rate * t.predict(X)
        return out

    def staged_predict(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        out = np.full(X.shape[0], self.init)
        yield out.copy()
        for t in self.trees:
            out += self.learning_rate * t.predict(X)
            yield out.copy()

    def to_dict(self) -> dict:
        return {
            "kind": "gbm",
            "init": self.init,
            "learning_rate": self.learning_rate,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d) -> "GradientBoostingModel":
        return cls(
            float(d["init"]), float(d["learning_rate"]),
            [RegressionTree.from_dict(t) for t in d["trees"]],
        )


def fit_gbm(X, y, params: TreeParams, order=None) -> GradientBoostingModel:
    """Stagewise boosting: F0 = mean(y), each stage fits a tree to the current
    residuals on a seeded row subsample and adds ``learning_rate`` times it.

    ``train_loss[m]`` is the full-sample training MSE after m stages.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    if order is None:
        order = presort(X)
    rng = np.random.default_rng(params.seed)
    F = np.full(n, float(y.mean()))
    model = GradientBoostingModel(float(y.mean()), params.learning_rate, [])
    model.train_loss.append(float(np.mean((y - F) ** 2)))
    n_sub = max(1, int(round(params.subsample * n)))
    for stage in range(params.n_estimators):
        resid = y - F
        if n_sub < n:
            w = np.zeros(n)
            w[rng.choice(n, size=n_sub, replace=False)] = 1.0
        else:
            w = None
        tree = fit_tree(
            X, resid,
            max_depth=params.max_depth,
            min_samples_leaf=params.min_samples_leaf,
            sample_weight=w,
            order=order,
        )
        F += params.learning_rate * tree.predict(X)
        model.trees.append(tree)
        model.train_loss.append(float(np.mean((y - F) ** 2)))
    return model
