"""Missing-data imputation: chained-equations regression with median and
clinical-default fallbacks, a KNN cross-check imputer, and the audit that
compares them."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .cohort import CohortTable, ColumnSpec
from .errors import ConfigError, DataError, ImputationError

log = logging.getLogger(__name__)

RIDGE_JITTER = 1e-6
_MAX_COND = 1e10


class Strategy(str, enum.Enum):
    MICE = "MICE"
    MEDIAN = "Median"
    CLINICAL_DEFAULT = "ClinicalDefault"


@dataclass(frozen=True)
class ImputePolicy:
    mice_max_iter: int = 50
    mice_tol: float = 1e-4
    knn_k: int = 5
    missing_rate_cutoff: float = 0.7
    clinical_defaults: dict = field(default_factory=dict)
    disagreement_threshold: float = 0.10

    def __post_init__(self):
        if self.mice_tol <= 0:
            raise ConfigError("mice_tol must be > 0")
        if self.knn_k < 1:
            raise ConfigError("knn_k must be >= 1")
        if not 0 < self.missing_rate_cutoff < 1:
            raise ConfigError("missing_rate_cutoff must be in (0, 1)")
        if self.mice_max_iter < 1:
            raise ConfigError("mice_max_iter must be >= 1")


def select_strategy(column: ColumnSpec, missing_rate: float, policy: ImputePolicy) -> Strategy:
    if column.name in policy.clinical_defaults:
        return Strategy.CLINICAL_DEFAULT
    if missing_rate > policy.missing_rate_cutoff:
        return Strategy.MEDIAN
    return Strategy.MICE


def _scale(x: np.ndarray) -> float:
    s = float(np.std(x)) if x.size else 0.0
    return s if s > 0 else 1.0


def _solve_least_squares(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Least squares with intercept in column 0; ridge jitter when singular."""
    mu = A[:, 1:].mean(axis=0)
    sd = A[:, 1:].std(axis=0)
    sd[sd == 0] = 1.0
    Z = np.empty_like(A)
    Z[:, 0] = 1.0
    Z[:, 1:] = (A[:, 1:] - mu) / sd
    G = Z.T @ Z
    rhs = Z.T @ b
    if np.linalg.cond(G) > _MAX_COND:
        pen = np.full(G.shape[0], RIDGE_JITTER * Z.shape[0])
        pen[0] = 0.0
        G = G + np.diag(pen)
    w = np.linalg.solve(G, rhs)
    # back to the unscaled design
    coef = np.empty_like(w)
    coef[1:] = w[1:] / sd
    coef[0] = w[0] - np.dot(coef[1:], mu)
    return coef


def _initial_fill(table: CohortTable, policy: ImputePolicy):
    X = np.array(table.X, dtype=float)
    miss = np.isnan(X)
    rates = miss.mean(axis=0) if X.shape[0] else np.zeros(X.shape[1])
    strategies = []
    for j, spec in enumerate(table.schema):
        strat = select_strategy(spec, float(rates[j]), policy)
        strategies.append(strat)
        if not miss[:, j].any():
            continue
        if strat is Strategy.CLINICAL_DEFAULT:
            X[miss[:, j], j] = float(policy.clinical_defaults[spec.name])
            continue
        observed = X[~miss[:, j], j]
        if observed.size == 0:
            raise ImputationError(
                f"column {spec.name!r} has no observed values; supply a clinical default"
            )
        X[miss[:, j], j] = np.median(observed)
    return X, miss, rates, strategies


def mice_impute(table: CohortTable, policy: ImputePolicy | None = None):
    """Single deterministic chained-equations imputation.

    Missing cells start at the column median (or the clinical default / median
    strategy for columns routed away from MICE). Each sweep regresses every
    incomplete MICE column, in schema order, on all other columns using the
    rows where it is observed, and overwrites its missing cells with the
    fitted values. Iteration stops once the largest change of any imputed
    value, relative to the column's observed SD, drops below ``mice_tol``.

    Returns ``(imputed_table, sweeps_used)``.
    """
    policy = policy or ImputePolicy()
    if not np.isnan(table.X).any():
        return table, 0
    X, miss, _, strategies = _initial_fill(table, policy)
    targets = [
        j for j, s in enumerate(strategies) if s is Strategy.MICE and miss[:, j].any()
    ]
    d = X.shape[1]
    scales = {j: _scale(table.X[~miss[:, j], j]) for j in targets}
    sweeps = 0
    last_delta = 0.0
    for sweeps in range(1, policy.mice_max_iter + 1) if targets else ():
        last_delta = 0.0
        for j in targets:
            others = [c for c in range(d) if c != j]
            obs = ~miss[:, j]
            A = np.column_stack([np.ones(X.shape[0]), X[:, others]])
            coef = _solve_least_squares(A[obs], X[obs, j])
            new = A[~obs] @ coef
            delta = np.max(np.abs(new - X[~obs, j])) / scales[j]
            last_delta = max(last_delta, float(delta))
            X[~obs, j] = new
        if last_delta < policy.mice_tol:
            break
    else:
        if targets:
            log.warning("MICE stopped at max_iter=%d with delta %.3g", policy.mice_max_iter, last_delta)
    # observed cells are carried through untouched
    X[~miss] = table.X[~miss]
    return table.with_features(table.schema, X), sweeps


def knn_impute(table: CohortTable, k: int = 5) -> CohortTable:
    """Fill each missing cell with the mean of its k nearest rows that observe it.

    Distance is Euclidean over mutually observed standardised features,
    rescaled by (total features / shared features). Fewer than k eligible
    neighbours uses all of them; none falls back to the column median.
    """
    if k < 1:
        raise ConfigError("k must be >= 1")
    X = np.array(table.X, dtype=float)
    miss = np.isnan(X)
    if not miss.any():
        return table
    n, d = X.shape
    obs = ~miss
    mu = np.array([X[obs[:, j], j].mean() if obs[:, j].any() else 0.0 for j in range(d)])
    sd = np.array([_scale(X[obs[:, j], j]) for j in range(d)])
    Z = np.where(obs, (X - mu) / sd, 0.0)
    M = obs.astype(float)
    Z2 = Z * Z
    out = X.copy()
    rows = np.flatnonzero(miss.any(axis=1))
    block = 256
    for start in range(0, rows.size, block):
        r = rows[start : start + block]
        shared = M[r] @ M.T
        d2 = Z2[r] @ M.T + M[r] @ Z2.T - 2.0 * (Z[r] @ Z.T)
        np.maximum(d2, 0.0, out=d2)
        with np.errstate(divide="ignore", invalid="ignore"):
            dist = np.where(shared > 0, np.sqrt(d2 * d / shared), np.inf)
        for a, i in enumerate(r):
            dist[a, i] = np.inf
            for j in np.flatnonzero(miss[i]):
                eligible = np.flatnonzero(obs[:, j] & np.isfinite(dist[a]))
                if eligible.size == 0:
                    col = X[obs[:, j], j]
                    if col.size == 0:
                        raise ImputationError(f"column {table.schema[j].name!r} has no observed values")
                    out[i, j] = np.median(col)
                    continue
                order = np.lexsort((eligible, dist[a, eligible]))
                nearest = eligible[order[:k]]
                out[i, j] = X[nearest, j].mean()
    return table.with_features(table.schema, out)


@dataclass(frozen=True)
class ColumnAudit:
    name: str
    strategy: str
    missing_rate: float
    ks_statistic: float
    ks_pvalue: float
    disagreement: float
    flagged: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class ImputationAudit:
    columns: list[ColumnAudit]
    iterations_used: int = 0

    @property
    def flagged(self) -> list[str]:
        return [c.name for c in self.columns if c.flagged]

    @property
    def mean_disagreement(self) -> float:
        vals = [c.disagreement for c in self.columns if c.missing_rate > 0]
        return float(np.mean(vals)) if vals else 0.0

    @property
    def max_disagreement(self) -> float:
        vals = [c.disagreement for c in self.columns if c.missing_rate > 0]
        return float(np.max(vals)) if vals else 0.0

    def to_dict(self) -> dict:
        return {
            "iterations_used": self.iterations_used,
            "mean_disagreement": self.mean_disagreement,
            "max_disagreement": self.max_disagreement,
            "flagged": self.flagged,
            "columns": [c.to_dict() for c in self.columns],
        }


def _iqr_scale(x: np.ndarray) -> float:
    if x.size == 0:
        return 1.0
    q75, q25 = np.percentile(x, [75, 25])
    if q75 > q25:
        return float(q75 - q25)
    return _scale(x)


def ks_statistic(a, b) -> tuple[float, float]:
    """Two-sample KS statistic and asymptotic p-value."""
    res = stats.ks_2samp(np.asarray(a, float), np.asarray(b, float), method="asymp")
    return float(res.statistic), float(res.pvalue)


def validate_imputation(
    before: CohortTable,
    after_mice: CohortTable,
    after_knn: CohortTable,
    policy: ImputePolicy | None = None,
    iterations_used: int = 0,
) -> ImputationAudit:
    """Per-column distribution preservation and MICE-vs-KNN sensitivity.

    Disagreement is the mean |mice - knn| over originally missing cells
    divided by the observed IQR; columns at or above the threshold are flagged.
    """
    policy = policy or ImputePolicy()
    if before.X.shape != after_mice.X.shape or before.X.shape != after_knn.X.shape:
        raise DataError("imputation audit needs tables of identical shape")
    miss = np.isnan(before.X)
    audits = []
    for j, spec in enumerate(before.schema):
        m = miss[:, j]
        observed = before.X[~m, j]
        rate = float(m.mean()) if m.size else 0.0
        if m.any() and observed.size:
            ks, p = ks_statistic(observed, after_mice.X[:, j])
            diff = np.abs(after_mice.X[m, j] - after_knn.X[m, j])
            dis = float(diff.mean() / _iqr_scale(observed))
        else:
            ks, p, dis = 0.0, 1.0, 0.0
        audits.append(
            ColumnAudit(
                name=spec.name,
                strategy=select_strategy(spec, rate, policy).value,
                missing_rate=rate,
                ks_statistic=ks,
                ks_pvalue=p,
                disagreement=dis,
                flagged=dis >= policy.disagreement_threshold,
            )
        )
    return ImputationAudit(audits, iterations_used)


def impute(table: CohortTable, policy: ImputePolicy | None = None):
    """Run MICE, the KNN cross-check and the audit. Returns (table, audit)."""
    policy = policy or ImputePolicy()
    imputed, sweeps = mice_impute(table, policy)
    knn = knn_impute(table, policy.knn_k)
    audit = validate_imputation(table, imputed, knn, policy, sweeps)
    if audit.flagged:
        log.warning("MICE and KNN disagree on columns %s", audit.flagged)
    return imputed, audit
