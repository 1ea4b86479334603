"""Patient-grouped cross-validation of the full ensemble."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cohort import CohortTable
from ..models.ensemble import EnsembleConfig, PredictionSet, fit_ensemble, predict_with_intervals
from ..parallel import parallel_map
from .folds import FoldPlan, plan_group_kfold


@dataclass
class CVResult:
    plan: FoldPlan
    fold_of_row: np.ndarray
    predictions: PredictionSet  # out-of-fold, aligned to table rows
    fold_rmse: list  # per fold, [sbp, dbp]


def cross_validate(table: CohortTable, cfg: EnsembleConfig | None = None, k: int = 5, seed: int = 0,
                   threads: int = 1) -> CVResult:
    """Fit on k-1 folds, predict the held-out fold; preprocessing and every
    learner see training-fold rows only."""
    cfg = cfg or EnsembleConfig()
    plan = plan_group_kfold(table.group_id, k, seed)
    splits = list(plan.splits(table.group_id))

    def run(split):
        train, test = split
        model = fit_ensemble(table.take_rows(train), cfg)
        return test, predict_with_intervals(model, table.X[test], table.feature_names)

    n = table.n_rows
    point = np.empty((n, 2))
    lower = np.full((n, 2), np.nan)
    upper = np.full((n, 2), np.nan)
    tier = np.full((n, 2), None, dtype=object)
    swapped = {}
    fold_rmse = []
    for test, ps in parallel_map(run, splits, threads):
        point[test], lower[test], upper[test], tier[test] = ps.point, ps.lower, ps.upper, ps.risk_tier
        for key, v in ps.n_swapped.items():
            swapped[key] = swapped.get(key, 0) + v
        err = ps.point - table.targets[test]
        fold_rmse.append(np.sqrt(np.mean(err**2, axis=0)).tolist())
    return CVResult(plan, plan.fold_of(table.group_id), PredictionSet(point, lower, upper, tier, swapped), fold_rmse)


def cv_rmse(table: CohortTable, cfg: EnsembleConfig | None = None, k: int = 5, seed: int = 0,
            threads: int = 1) -> np.ndarray:
    res = cross_validate(table, cfg, k, seed, threads)
    return np.sqrt(np.mean((res.predictions.point - table.targets) ** 2, axis=0))
