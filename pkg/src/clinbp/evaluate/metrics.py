"""Clinical accuracy metrics: error summaries, AAMI and BHS gates,
Bland-Altman agreement, interval coverage, equity and degradation."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from ..cohort import Stratum, strata_of

log = logging.getLogger(__name__)

AAMI_MAX_BIAS = 5.0
AAMI_MAX_SD = 8.0
# (within 5, within 10, within 15) minimum percentages per grade
BHS_THRESHOLDS = (
    ("A", (60.0, 85.0, 95.0)),
    ("B", (50.0, 75.0, 90.0)),
    ("C", (40.0, 65.0, 85.0)),
)
LOA_Z = 1.96
LOA_ACCEPTABLE_WIDTH = 15.0
COVERAGE_BAND = (0.75, 0.85)
EQUITY_THRESHOLD = 1.2
EQUITY_MIN_N = 10
STRATUM_MIN_N = 30
HYPOTENSION_SBP = 90.0


def _pair(y_true, y_pred):
    y = np.asarray(y_true, dtype=float).ravel()
    p = np.asarray(y_pred, dtype=float).ravel()
    if y.shape != p.shape:
        raise ValueError("y_true and y_pred differ in length")
    return y, p


@dataclass(frozen=True)
class CoreMetrics:
    rmse: float
    mae: float
    r2: float | None  # None when y_true is constant
    mean_bias: float
    error_sd: float


def core_metrics(y_true, y_pred) -> CoreMetrics:
    """Errors are taken as prediction minus truth; SD uses 1/n."""
    y, p = _pair(y_true, y_pred)
    if y.size < 2:
        raise ValueError("need at least two rows")
    e = p - y
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = None if ss_tot == 0 else 1.0 - float(np.sum(e * e)) / ss_tot
    return CoreMetrics(
        float(np.sqrt(np.mean(e * e))), float(np.mean(np.abs(e))), r2, float(e.mean()), float(e.std())
    )


def rmse(y_true, y_pred) -> float:
    y, p = _pair(y_true, y_pred)
    return float(np.sqrt(np.mean((p - y) ** 2)))


def within_percentages(y_true, y_pred) -> tuple[float, float, float]:
    y, p = _pair(y_true, y_pred)
    a = np.abs(p - y)
    return tuple(float(100.0 * np.mean(a <= t)) for t in (5.0, 10.0, 15.0))


def bhs_grade(within_5: float, within_10: float, within_15: float) -> str:
    if not 0 <= within_5 <= within_10 <= within_15 <= 100:
        raise ValueError(
            f"within percentages must satisfy 0 <= w5 <= w10 <= w15 <= 100, got "
            f"({within_5}, {within_10}, {within_15})"
        )
    for grade, (a, b, c) in BHS_THRESHOLDS:
        if within_5 >= a and within_10 >= b and within_15 >= c:
            return grade
    return "D"


def aami_check(mean_bias: float, error_sd: float) -> bool:
    if error_sd < 0:
        raise ValueError("error_sd must be non-negative")
    return abs(mean_bias) <= AAMI_MAX_BIAS and error_sd <= AAMI_MAX_SD


@dataclass(frozen=True)
class BlandAltman:
    bias: float
    loa_lower: float
    loa_upper: float
    width: float
    acceptable: bool


def bland_altman(y_true, y_pred) -> BlandAltman:
    y, p = _pair(y_true, y_pred)
    if y.size < 2:
        raise ValueError("need at least two rows")
    d = p - y
    bias, sd = float(d.mean()), float(d.std())
    lo, hi = bias - LOA_Z * sd, bias + LOA_Z * sd
    width = hi - lo
    return BlandAltman(bias, lo, hi, width, width < LOA_ACCEPTABLE_WIDTH)


def bland_altman_series(y_true, y_pred) -> dict:
    """Plot-ready mean-vs-difference pairs."""
    y, p = _pair(y_true, y_pred)
    return {"mean": (0.5 * (y + p)).tolist(), "difference": (p - y).tolist()}


def coverage_probability(y_true, lower, upper) -> float:
    y = np.asarray(y_true, dtype=float)
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if np.any(lo > hi):
        raise ValueError("lower bound exceeds upper bound")
    return float(np.mean((y >= lo) & (y <= hi)))


def coverage_in_band(coverage: float, band=COVERAGE_BAND) -> bool:
    return band[0] <= coverage <= band[1]


@dataclass(frozen=True)
class EquityResult:
    ratio: float
    passed: bool
    low_n: list

    def to_dict(self) -> dict:
        return asdict(self)


def equity_ratio(rmse_by_group: dict, n_by_group: dict | None = None) -> EquityResult:
    """max / min of subgroup RMSE; passes below 1.2. Groups with fewer than
    10 rows are listed in ``low_n``."""
    if len(rmse_by_group) < 2:
        raise ValueError("equity ratio needs at least two subgroups")
    vals = np.array(list(rmse_by_group.values()), dtype=float)
    if np.any(vals <= 0):
        raise ValueError("subgroup RMSEs must be positive")
    ratio = float(vals.max() / vals.min())
    low = [g for g, n in (n_by_group or {}).items() if n < EQUITY_MIN_N]
    return EquityResult(ratio, ratio < EQUITY_THRESHOLD, low)


def generalizability(rmse_internal: float, rmse_external: float) -> float:
    """Signed percentage RMSE degradation from internal to external data."""
    if not rmse_internal > 0:
        raise ValueError("internal RMSE must be positive")
    return 100.0 * (rmse_external - rmse_internal) / rmse_internal


# ---------------------------------------------------------------------------
# stratified performance


@dataclass(frozen=True)
class StratumResult:
    n: int
    within_5: float
    within_10: float
    within_15: float
    bhs_grade: str
    reliable: bool


def hypotension_sensitivity(sbp_true, sbp_pred) -> float | None:
    y, p = _pair(sbp_true, sbp_pred)
    pos = y < HYPOTENSION_SBP
    if not pos.any():
        return None
    return float(np.mean(p[pos] < HYPOTENSION_SBP))


def stratified_report(y_true, y_pred, sbp_true=None) -> dict:
    """Per true-SBP stratum: n, within-5/10/15 and BHS grade of the
    prediction errors. Rows are stratified on ``sbp_true`` (default
    ``y_true``). Empty strata are omitted; strata with fewer than 30 rows are
    marked unreliable."""
    y, p = _pair(y_true, y_pred)
    strata = strata_of(y if sbp_true is None else np.asarray(sbp_true, dtype=float))
    out = {}
    for s in Stratum:
        rows = strata == s.value
        n = int(rows.sum())
        if n == 0:
            continue
        w5, w10, w15 = within_percentages(y[rows], p[rows])
        out[s.value] = StratumResult(n, w5, w10, w15, bhs_grade(w5, w10, w15), n >= STRATUM_MIN_N)
    return out


# ---------------------------------------------------------------------------
# significance and thresholded detection


def bootstrap_degradation_pvalue(sq_err_internal, sq_err_external, n_boot: int = 1000, seed: int = 0) -> float:
    """One-sided bootstrap p-value for mean external squared error exceeding
    the internal one. The two cohorts hold different patients, so rows are
    resampled independently within each cohort; the null distribution is the
    bootstrap difference recentred at zero."""
    a = np.asarray(sq_err_internal, dtype=float)
    b = np.asarray(sq_err_external, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("need at least two rows per cohort")
    rng = np.random.default_rng(seed)
    obs = b.mean() - a.mean()
    ia = rng.integers(0, a.size, size=(n_boot, a.size))
    ib = rng.integers(0, b.size, size=(n_boot, b.size))
    diffs = b[ib].mean(axis=1) - a[ia].mean(axis=1)
    null = diffs - obs
    return float((1 + np.sum(null >= obs)) / (n_boot + 1))


def threshold_auc(y_true, score, threshold: float) -> float | None:
    """ROC AUC of ``score`` for detecting ``y_true > threshold`` (Mann-Whitney
    form, ties counted half)."""
    y = np.asarray(y_true, dtype=float)
    s = np.asarray(score, dtype=float)
    pos = y > threshold
    n1, n0 = int(pos.sum()), int((~pos).sum())
    if n1 == 0 or n0 == 0:
        return None
    from scipy.stats import rankdata

    r = rankdata(s)
    return float((r[pos].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


def finite_or_none(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None
