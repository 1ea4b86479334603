"""Blended ensemble with quantile interval heads, one learner set per target."""

from __future__ import annotations

import enum
import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats

from ..cohort import TARGET_NAMES, CohortTable, Stratum, strata_of
from ..errors import ConfigError, SchemaMismatchError
from .boosting import GradientBoostingModel
from .linear import QuantileModel, fit_quantile
from .params import TreeParams
from .stacking import StackedModel, blend_alpha, blend_alpha_grid, fit_stacked, is_degenerate_blend

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-10
IQR_FLOOR = 1e-9


def schema_hash(names) -> str:
    return hashlib.sha256(json.dumps(list(names)).encode()).hexdigest()


def derive_seed(seed: int, *path: int) -> int:
    return int(np.random.SeedSequence([int(seed), *path]).generate_state(1)[0] & 0x7FFFFFFF)


# ---------------------------------------------------------------------------
# preprocessing


@dataclass
class Preprocessor:
    """Variance filter, then (x - median) / IQR, then Yeo-Johnson on the
    configured columns."""

    keep: np.ndarray  # boolean mask over input columns
    median: np.ndarray
    iqr: np.ndarray
    yj_index: np.ndarray  # positions (after filtering) that are power-transformed
    yj_lambda: np.ndarray

    @classmethod
    def fit(cls, X, names, transform_columns=()) -> "Preprocessor":
        X = np.asarray(X, dtype=np.float64)
        keep = X.var(axis=0) >= VARIANCE_FLOOR
        if not keep.any():
            raise ConfigError("every feature has (near) zero variance")
        Xk = X[:, keep]
        med = np.median(Xk, axis=0)
        q75, q25 = np.percentile(Xk, [75, 25], axis=0)
        iqr = np.maximum(q75 - q25, IQR_FLOOR)
        kept_names = [n for n, k in zip(names, keep) if k]
        yj_index = np.array([kept_names.index(c) for c in transform_columns if c in kept_names], dtype=int)
        Z = (Xk - med) / iqr
        lambdas = np.array([stats.yeojohnson_normmax(Z[:, j]) for j in yj_index], dtype=float)
        return cls(keep, med, iqr, yj_index, lambdas)

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        Z = (X[:, self.keep] - self.median) / self.iqr
        for j, lam in zip(self.yj_index, self.yj_lambda):
            Z[:, j] = stats.yeojohnson(Z[:, j], lmbda=float(lam))
        return np.ascontiguousarray(Z)

    def to_dict(self) -> dict:
        return {
            "keep": self.keep.tolist(),
            "median": self.median.tolist(),
            "iqr": self.iqr.tolist(),
            "yj_index": self.yj_index.tolist(),
            "yj_lambda": self.yj_lambda.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "Preprocessor":
        return cls(
            np.asarray(d["keep"], dtype=bool),
            np.asarray(d["median"], dtype=float),
            np.asarray(d["iqr"], dtype=float),
            np.asarray(d["yj_index"], dtype=int),
            np.asarray(d["yj_lambda"], dtype=float),
        )


# ---------------------------------------------------------------------------
# configuration


class BlendMode(str, enum.Enum):
    CLOSED_FORM = "closed_form"
    GRID = "grid"


@dataclass(frozen=True)
class EnsembleConfig:
    gbm: TreeParams = field(default_factory=lambda: TreeParams(
        max_depth=3, min_samples_leaf=5, n_estimators=100, learning_rate=0.1, subsample=0.8))
    forest: TreeParams = field(default_factory=lambda: TreeParams(
        max_depth=8, min_samples_leaf=3, n_estimators=50, feature_fraction=0.33))
    stack_folds: int = 5
    meta_penalty: float = 1.0
    quantiles: tuple = (0.1, 0.9)
    l1_penalty: float = 0.1
    blend_mode: BlendMode = BlendMode.CLOSED_FORM
    transform_columns: tuple = ()
    use_stacking: bool = True  # off: point = primary GBM
    use_primary_blend: bool = True  # off: point = stacked model
    use_quantiles: bool = True  # off: no interval heads
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "blend_mode", BlendMode(self.blend_mode))
        object.__setattr__(self, "quantiles", tuple(float(q) for q in self.quantiles))
        object.__setattr__(self, "transform_columns", tuple(self.transform_columns))
        lo, hi = self.quantiles
        if not 0 < lo < hi < 1:
            raise ConfigError("quantiles must satisfy 0 < lower < upper < 1")
        if self.l1_penalty < 0 or self.meta_penalty < 0:
            raise ConfigError("penalties must be non-negative")
        if self.stack_folds < 2:
            raise ConfigError("stack_folds must be >= 2")
        if not (self.use_stacking or self.use_primary_blend):
            raise ConfigError("at least one of stacking and the primary model must be enabled")

    def to_dict(self) -> dict:
        return {
            "gbm": self.gbm.to_dict(),
            "forest": self.forest.to_dict(),
            "stack_folds": self.stack_folds,
            "meta_penalty": self.meta_penalty,
            "quantiles": list(self.quantiles),
            "l1_penalty": self.l1_penalty,
            "blend_mode": self.blend_mode.value,
            "transform_columns": list(self.transform_columns),
            "use_stacking": self.use_stacking,
            "use_primary_blend": self.use_primary_blend,
            "use_quantiles": self.use_quantiles,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d) -> "EnsembleConfig":
        d = dict(d)
        d["gbm"] = TreeParams(**d["gbm"])
        d["forest"] = TreeParams(**d["forest"])
        return cls(**d)


# ---------------------------------------------------------------------------
# fitted model


@dataclass
class TargetModel:
    """Learners for one target. ``primary`` is the stacked model's GBM base."""

    stacked: StackedModel
    alpha: float
    alpha_degenerate: bool
    lower: QuantileModel | None
    upper: QuantileModel | None
    width_cuts: tuple  # (P33, P66) of training interval widths

    @property
    def primary(self) -> GradientBoostingModel:
        return self.stacked.gbm

    def point(self, Z) -> np.ndarray:
        if self.alpha == 1.0:
            return self.primary.predict(Z)
        base = self.stacked.base_predictions(Z)
        stacked = self.stacked.meta.predict(base)
        if self.alpha == 0.0:
            return stacked
        return self.alpha * base[:, 0] + (1 - self.alpha) * stacked

    def to_dict(self) -> dict:
        return {
            "stacked": self.stacked.to_dict(),
            "alpha": self.alpha,
            "alpha_degenerate": self.alpha_degenerate,
            "lower": None if self.lower is None else self.lower.to_dict(),
            "upper": None if self.upper is None else self.upper.to_dict(),
            "width_cuts": list(self.width_cuts),
        }

    @classmethod
    def from_dict(cls, d) -> "TargetModel":
        return cls(
            StackedModel.from_dict(d["stacked"]),
            float(d["alpha"]),
            bool(d["alpha_degenerate"]),
            None if d["lower"] is None else QuantileModel.from_dict(d["lower"]),
            None if d["upper"] is None else QuantileModel.from_dict(d["upper"]),
            tuple(float(v) for v in d["width_cuts"]),
        )


@dataclass
class FittedEnsemble:
    feature_names: list
    schema_hash: str
    preprocessor: Preprocessor
    targets: dict  # "sbp"/"dbp" -> TargetModel
    config: EnsembleConfig
    metadata: dict = field(default_factory=dict)

    @property
    def has_intervals(self) -> bool:
        return all(t.lower is not None for t in self.targets.values())

    def check_schema(self, names) -> None:
        if schema_hash(names) != self.schema_hash:
            missing = [n for n in self.feature_names if n not in set(names)]
            raise SchemaMismatchError(
                "cohort schema does not match the model "
                f"({len(missing)} model features absent); route it through align_features"
            )

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "schema_hash": self.schema_hash,
            "preprocessor": self.preprocessor.to_dict(),
            "targets": {k: v.to_dict() for k, v in self.targets.items()},
            "config": self.config.to_dict(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d) -> "FittedEnsemble":
        return cls(
            list(d["feature_names"]),
            d["schema_hash"],
            Preprocessor.from_dict(d["preprocessor"]),
            {k: TargetModel.from_dict(v) for k, v in d["targets"].items()},
            EnsembleConfig.from_dict(d["config"]),
            dict(d.get("metadata", {})),
        )


def _risk_tiers(width: np.ndarray, cuts) -> np.ndarray:
    p33, p66 = cuts
    return np.where(width <= p33, "Low", np.where(width <= p66, "Medium", "High")).astype(object)


def _fit_target(Z, y, groups, cfg: EnsembleConfig, t: int, threads: int) -> TargetModel:
    gbm = cfg.gbm.replace(seed=derive_seed(cfg.seed, t, 0))
    forest = cfg.forest.replace(seed=derive_seed(cfg.seed, t, 1))
    stacked = fit_stacked(
        Z, y, groups, gbm, forest,
        k=cfg.stack_folds, seed=derive_seed(cfg.seed, t, 2),
        meta_penalty=cfg.meta_penalty, threads=threads,
    )
    # blend weight from out-of-fold predictions so it is not fitted in-sample
    p_oof = stacked.oof[:, 0]
    s_oof = stacked.meta.predict(stacked.oof)
    degenerate = is_degenerate_blend(p_oof, s_oof)
    if not cfg.use_stacking:
        alpha = 1.0
    elif not cfg.use_primary_blend:
        alpha = 0.0
    elif cfg.blend_mode is BlendMode.GRID:
        alpha = blend_alpha_grid(y, p_oof, s_oof)
    else:
        alpha = blend_alpha(y, p_oof, s_oof)

    lower = upper = None
    cuts = (0.0, 0.0)
    if cfg.use_quantiles:
        lo, hi = cfg.quantiles
        lower = fit_quantile(Z, y, lo, cfg.l1_penalty)
        upper = fit_quantile(Z, y, hi, cfg.l1_penalty)
        a, b = lower.predict(Z), upper.predict(Z)
        width = np.abs(b - a)
        cuts = tuple(float(v) for v in np.percentile(width, [33, 66]))
    return TargetModel(stacked, float(alpha), degenerate, lower, upper, cuts)


def fit_ensemble(table: CohortTable, cfg: EnsembleConfig | None = None, threads: int = 1,
                 metadata: dict | None = None) -> FittedEnsemble:
    """Fit preprocessing on ``table`` then independent learners per target."""
    cfg = cfg or EnsembleConfig()
    if np.isnan(table.X).any():
        raise ConfigError("ensemble fitting needs complete (imputed) features")
    names = table.feature_names
    pre = Preprocessor.fit(table.X, names, cfg.transform_columns)
    Z = pre.transform(table.X)
    models = {}
    for t, name in enumerate(TARGET_NAMES):
        models[name] = _fit_target(Z, table.targets[:, t], table.group_id, cfg, t, threads)
    return FittedEnsemble(list(names), schema_hash(names), pre, models, cfg, dict(metadata or {}))


@dataclass
class PredictionSet:
    """Per-row, per-target predictions; columns of each array are [SBP, DBP]."""

    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    risk_tier: np.ndarray
    n_swapped: dict = field(default_factory=dict)

    @property
    def interval_width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def n_rows(self) -> int:
        return self.point.shape[0]

    def take(self, rows) -> "PredictionSet":
        return PredictionSet(self.point[rows], self.lower[rows], self.upper[rows],
                             self.risk_tier[rows], dict(self.n_swapped))

    def to_frame(self) -> pd.DataFrame:
        cols = {}
        w = self.interval_width
        for t, name in enumerate(TARGET_NAMES):
            cols[f"{name}_pred"] = self.point[:, t]
            cols[f"{name}_lower"] = self.lower[:, t]
            cols[f"{name}_upper"] = self.upper[:, t]
            cols[f"{name}_width"] = w[:, t]
            cols[f"{name}_risk_tier"] = self.risk_tier[:, t]
        return pd.DataFrame(cols)


def predict_with_intervals(model: FittedEnsemble, table_or_X, names=None) -> PredictionSet:
    """Blend point predictions and attach quantile-head bounds and risk tiers.

    Crossed bounds are swapped and counted. Tiers use the training-width
    percentiles frozen in the model: Low <= P33 < Medium <= P66 < High.
    """
    if isinstance(table_or_X, CohortTable):
        X, names = table_or_X.X, table_or_X.feature_names
    else:
        X = np.asarray(table_or_X, dtype=np.float64)
        names = model.feature_names if names is None else names
    model.check_schema(names)
    if np.isnan(X).any():
        raise ConfigError("prediction needs complete (imputed) features")
    Z = model.preprocessor.transform(X)
    n = Z.shape[0]
    point = np.empty((n, 2))
    lower = np.full((n, 2), np.nan)
    upper = np.full((n, 2), np.nan)
    tier = np.full((n, 2), None, dtype=object)
    swapped = {}
    for t, name in enumerate(TARGET_NAMES):
        tm = model.targets[name]
        point[:, t] = tm.point(Z)
        if tm.lower is None:
            continue
        a, b = tm.lower.predict(Z), tm.upper.predict(Z)
        cross = a > b
        swapped[name] = int(cross.sum())
        lower[:, t] = np.where(cross, b, a)
        upper[:, t] = np.where(cross, a, b)
        tier[:, t] = _risk_tiers(upper[:, t] - lower[:, t], tm.width_cuts)
    return PredictionSet(point, lower, upper, tier, swapped)


# ---------------------------------------------------------------------------
# stratum-specific models


@dataclass
class StratifiedEnsemble:
    global_model: FittedEnsemble
    models: dict  # Stratum value -> FittedEnsemble
    counts: dict
    flagged: list  # strata below the minimum size, served by the global model

    def predict(self, table: CohortTable) -> PredictionSet:
        """Route each row by the global model's predicted SBP stratum."""
        base = predict_with_intervals(self.global_model, table)
        route = strata_of(base.point[:, 0])
        for s, m in self.models.items():
            rows = np.flatnonzero(route == s)
            if rows.size == 0:
                continue
            sub = predict_with_intervals(m, table.X[rows], table.feature_names)
            base.point[rows] = sub.point
            base.lower[rows] = sub.lower
            base.upper[rows] = sub.upper
            base.risk_tier[rows] = sub.risk_tier
        return base


def fit_stratified(table: CohortTable, cfg: EnsembleConfig | None = None, min_stratum: int = 30,
                   threads: int = 1) -> StratifiedEnsemble:
    """One dedicated ensemble per blood-pressure stratum holding at least
    ``min_stratum`` patients; smaller strata are flagged and fall back to the
    global model."""
    cfg = cfg or EnsembleConfig()
    strata = strata_of(table.targets[:, 0])
    global_model = fit_ensemble(table, cfg, threads)
    models, counts, flagged = {}, {}, []
    for s in Stratum:
        rows = np.flatnonzero(strata == s.value)
        counts[s.value] = int(rows.size)
        if rows.size == 0:
            continue
        n_patients = len(set(table.group_id[rows]))
        if n_patients < min_stratum:
            log.warning("stratum %s has %d patients (< %d); using the global model", s.value, n_patients, min_stratum)
            flagged.append(s.value)
            continue
        models[s.value] = fit_ensemble(table.take_rows(rows), cfg, threads)
    return StratifiedEnsemble(global_model, models, counts, flagged)
