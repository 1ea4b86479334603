"""Stacked ensemble (GBM + random forest, ridge combiner) and the
primary/stacked blend weight."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..evaluate.folds import plan_group_kfold
from ..parallel import parallel_map
from .boosting import GradientBoostingModel, fit_gbm
from .forest import RandomForestModel, fit_random_forest
from .linear import LinearModel, fit_ridge
from .params import TreeParams
from .tree import presort

log = logging.getLogger(__name__)

DEGENERATE_ALPHA = 0.4
ALPHA_GRID = tuple(round(0.1 * i, 1) for i in range(11))


@dataclass
class StackedModel:
    gbm: GradientBoostingModel
    forest: RandomForestModel
    meta: LinearModel
    # out-of-fold base predictions, columns [gbm, forest]; not persisted
    oof: np.ndarray | None = None
    fold_of_row: np.ndarray | None = None
    fold_train_groups: list = field(default_factory=list)

    def base_predictions(self, X) -> np.ndarray:
        return np.column_stack([self.gbm.predict(X), self.forest.predict(X)])

    def predict(self, X) -> np.ndarray:
        return self.meta.predict(self.base_predictions(X))

    def to_dict(self) -> dict:
        return {"gbm": self.gbm.to_dict(), "forest": self.forest.to_dict(), "meta": self.meta.to_dict()}

    @classmethod
    def from_dict(cls, d) -> "StackedModel":
        return cls(
            GradientBoostingModel.from_dict(d["gbm"]),
            RandomForestModel.from_dict(d["forest"]),
            LinearModel.from_dict(d["meta"]),
        )


def fit_stacked(
    X,
    y,
    groups,
    gbm_params: TreeParams,
    forest_params: TreeParams,
    k: int = 5,
    seed: int = 0,
    meta_penalty: float = 1.0,
    threads: int = 1,
) -> StackedModel:
    """Out-of-fold stacking.

    Base learners are fit on k-1 group folds and predict the held-out fold,
    giving an (n, 2) out-of-fold matrix; a ridge combiner is fit on it; the
    bases are then refit on all rows.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    groups = np.asarray(groups, dtype=object)
    if X.shape[0] < 50:
        log.warning("stacking with only %d rows", X.shape[0])
    plan = plan_group_kfold(groups, k, seed)
    splits = list(plan.splits(groups))

    def fold_job(split):
        train, test = split
        Xtr = X[train]
        order = presort(Xtr)
        g = fit_gbm(Xtr, y[train], gbm_params, order=order)
        f = fit_random_forest(Xtr, y[train], forest_params, order=order)
        return test, g.predict(X[test]), f.predict(X[test]), frozenset(groups[train])

    oof = np.empty((X.shape[0], 2))
    train_groups = []
    for test, pg, pf, tg in parallel_map(fold_job, splits, threads):
        oof[test, 0] = pg
        oof[test, 1] = pf
        train_groups.append(tg)
    meta = fit_ridge(oof, y, meta_penalty)
    order = presort(X)
    gbm = fit_gbm(X, y, gbm_params, order=order)
    forest = fit_random_forest(X, y, forest_params, order=order, threads=threads)
    return StackedModel(gbm, forest, meta, oof, plan.fold_of(groups), train_groups)


def blend_mse(y_true, y_primary, y_stacked, alpha: float) -> float:
    pred = alpha * np.asarray(y_primary) + (1 - alpha) * np.asarray(y_stacked)
    return float(np.mean((np.asarray(y_true) - pred) ** 2))


def is_degenerate_blend(y_primary, y_stacked) -> bool:
    d = np.asarray(y_primary, float) - np.asarray(y_stacked, float)
    return not np.any(d != 0)


def blend_alpha(y_true, y_primary, y_stacked) -> float:
    """Weight on the primary model minimising the blend's mean squared error
    over [0, 1]: the unconstrained least-squares minimiser, clamped.

    Identical primary and stacked predictions give 0.4.
    """
    y = np.asarray(y_true, float)
    p = np.asarray(y_primary, float)
    s = np.asarray(y_stacked, float)
    if not (y.size == p.size == s.size) or y.size < 1:
        raise ValueError("blend inputs must be equal-length and non-empty")
    d = p - s
    dd = float(d @ d)
    if dd == 0.0:
        log.warning("primary and stacked predictions coincide; alpha set to %.1f", DEGENERATE_ALPHA)
        return DEGENERATE_ALPHA
    return float(np.clip(float(d @ (y - s)) / dd, 0.0, 1.0))


def blend_alpha_grid(y_true, y_primary, y_stacked, grid=ALPHA_GRID) -> float:
    """Grid-search variant over {0.0, 0.1, ..., 1.0}; first minimum wins."""
    if is_degenerate_blend(y_primary, y_stacked):
        return DEGENERATE_ALPHA
    losses = [blend_mse(y_true, y_primary, y_stacked, a) for a in grid]
    return float(grid[int(np.argmin(losses))])
