"""Ablation by feature category and model component, and permutation
importance."""

from __future__ import annotations

import logging
from dataclasses import replace

import numpy as np

from ..cohort import TARGET_NAMES, CohortTable
from ..models.ensemble import EnsembleConfig, FittedEnsemble, predict_with_intervals
from .cv import cv_rmse

log = logging.getLogger(__name__)

CATEGORIES = {"V": "vitals", "L": "laboratory", "M": "medication", "T": "temporal", "D": "derived"}
COMPONENTS = {
    "stacking": {"use_stacking": False},
    "blend": {"use_primary_blend": False},
    "quantile": {"use_quantiles": False},
}


def _impact(full: np.ndarray, without: np.ndarray) -> dict:
    out = {}
    for t, name in enumerate(TARGET_NAMES):
        delta = float(without[t] - full[t])
        out[name] = {"rmse": float(without[t]), "delta": delta, "percent": 100.0 * delta / float(full[t])}
    return out


def ablation_run(table: CohortTable, cfg: EnsembleConfig | None = None, k: int = 5, seed: int = 0,
                 categories=tuple(CATEGORIES), components=tuple(COMPONENTS), threads: int = 1,
                 baseline=None) -> dict:
    """Re-run grouped CV with each feature category or model component
    removed. Impact is RMSE_without - RMSE_full (positive = the removed part
    helped), also given as a percentage of RMSE_full.

    Interval heads do not feed point predictions, so removing them leaves
    RMSE unchanged by construction.
    """
    cfg = cfg or EnsembleConfig()
    full = np.asarray(baseline if baseline is not None else cv_rmse(table, cfg, k, seed, threads), dtype=float)
    out = {"baseline": {n: float(full[t]) for t, n in enumerate(TARGET_NAMES)}, "categories": {}, "components": {}}
    for code in categories:
        tag = CATEGORIES[code]
        drop = [s.name for s in table.schema if s.domain_tag == tag]
        entry = {"domain": tag, "removed": drop}
        if not drop:
            entry["skipped"] = "no features in this category"
        elif len(drop) == table.n_features:
            entry["skipped"] = "removing this category leaves no features"
        else:
            sub = table.drop(drop)
            sub_cfg = replace(cfg, transform_columns=tuple(c for c in cfg.transform_columns if c in sub.feature_names))
            entry["impact"] = _impact(full, cv_rmse(sub, sub_cfg, k, seed, threads))
        out["categories"][code] = entry
    for name in components:
        toggles = COMPONENTS[name]
        c = replace(cfg, **toggles)
        if name == "quantile":
            # point predictions do not depend on the interval heads
            without = full
        else:
            without = cv_rmse(table, c, k, seed, threads)
        out["components"][name] = {"toggles": toggles, "impact": _impact(full, without)}
    return out


def permutation_importance(model: FittedEnsemble, table: CohortTable, seed: int = 0, n_repeats: int = 5) -> dict:
    """Mean RMSE increase per feature (averaged over both targets) when that
    column is shuffled, ``n_repeats`` seeded shuffles each."""
    X = np.array(table.X, dtype=float)
    names = table.feature_names
    base = predict_with_intervals(model, X, names).point
    base_rmse = np.sqrt(np.mean((base - table.targets) ** 2, axis=0)).mean()
    rng = np.random.default_rng(seed)
    out = {}
    for j, name in enumerate(names):
        inc = []
        col = X[:, j].copy()
        for _ in range(n_repeats):
            X[:, j] = rng.permutation(col)
            p = predict_with_intervals(model, X, names).point
            inc.append(np.sqrt(np.mean((p - table.targets) ** 2, axis=0)).mean() - base_rmse)
        X[:, j] = col
        out[name] = float(np.mean(inc))
    return out
