"""Feature construction, four-stage selection, and external-schema alignment."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .cohort import CohortTable, ColumnSpec
from .errors import ConfigError, DataError, SelectionError

log = logging.getLogger(__name__)

DEFAULT_PAIRS = (
    ("age", "creatinine"),
    ("hr_mean", "creatinine"),
    ("vasopressor_use", "lactate"),
    ("hrv", "sbp_baseline"),
)
DEFAULT_TRANSFORMS = ("age", "creatinine", "lactate", "hr_mean")
DEFAULT_WHITELIST = ("vitals", "laboratory", "medication", "temporal", "derived", "demographic")

# R^2 this close to 1 is treated as exact collinearity
_COLLINEAR_TOL = 1e-10


@dataclass(frozen=True)
class FeaturePipelineConfig:
    interaction_pairs: tuple = DEFAULT_PAIRS
    transform_columns: tuple = DEFAULT_TRANSFORMS
    p_value_cutoff: float = 0.1
    vif_cutoff: float = 5.0
    mi_cutoff: float = 0.01
    target_feature_count: int = 74
    domain_whitelist: tuple = DEFAULT_WHITELIST

    def __post_init__(self):
        object.__setattr__(self, "interaction_pairs", tuple(tuple(p) for p in self.interaction_pairs))
        object.__setattr__(self, "transform_columns", tuple(self.transform_columns))
        object.__setattr__(self, "domain_whitelist", tuple(self.domain_whitelist))
        for p in self.interaction_pairs:
            if len(p) != 2:
                raise ConfigError(f"interaction pair must have two columns: {p!r}")
        if min(self.p_value_cutoff, self.vif_cutoff, self.mi_cutoff) <= 0:
            raise ConfigError("selection cutoffs must be positive")
        if self.target_feature_count < 1:
            raise ConfigError("target_feature_count must be >= 1")


def interaction_name(a: str, b: str) -> str:
    return f"{a}__x__{b}"


def build_interactions(table: CohortTable, pairs=DEFAULT_PAIRS) -> CohortTable:
    """Append one product column per configured pair, tagged ``derived``."""
    names = table.feature_names
    new_specs, new_cols = [], []
    for a, b in pairs:
        if a not in names or b not in names:
            raise ConfigError(f"interaction pair ({a}, {b}) references a missing column")
        for c in (a, b):
            if table.spec(c).kind == "categorical":
                raise ConfigError(f"interaction pair ({a}, {b}): {c} is not numeric")
        new_specs.append(ColumnSpec(interaction_name(a, b), "numeric", "derived"))
        new_cols.append(table.column(a) * table.column(b))
    if not new_specs:
        return table
    return table.with_features(
        list(table.schema) + new_specs, np.column_stack([table.X] + new_cols)
    )


TRANSFORM_SUFFIXES = ("sq", "sqrt", "log1p")


def build_power_transforms(table: CohortTable, columns=DEFAULT_TRANSFORMS) -> CohortTable:
    """Append x^2, sqrt(x) and log(1 + x) for each listed column."""
    new_specs, new_cols = [], []
    for name in columns:
        if name not in table.feature_names:
            raise ConfigError(f"transform column {name!r} not in table")
        x = table.column(name)
        neg = np.flatnonzero(x < 0)
        if neg.size:
            raise DataError(
                f"negative value {x[neg[0]]!r} in transform column {name!r} at row {int(neg[0])}"
            )
        new_cols += [x * x, np.sqrt(x), np.log1p(x)]
        new_specs += [
            ColumnSpec(f"{name}__{suf}", "numeric", "derived") for suf in TRANSFORM_SUFFIXES
        ]
    if not new_specs:
        return table
    return table.with_features(
        list(table.schema) + new_specs, np.column_stack([table.X] + new_cols)
    )


def engineer(table: CohortTable, cfg: FeaturePipelineConfig) -> CohortTable:
    return build_power_transforms(build_interactions(table, cfg.interaction_pairs), cfg.transform_columns)


# ---------------------------------------------------------------------------
# selection statistics


def univariate_pvalues(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """F-test p-value of the simple linear regression of y on each column."""
    n = X.shape[0]
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    sxx = np.einsum("ij,ij->j", Xc, Xc)
    syy = float(yc @ yc)
    out = np.ones(X.shape[1])
    ok = (sxx > 0) & (syy > 0)
    if n <= 2 or not ok.any():
        return out
    r = (Xc[:, ok].T @ yc) / np.sqrt(sxx[ok] * syy)
    r2 = np.clip(r * r, 0.0, 1.0)
    with np.errstate(divide="ignore"):
        F = r2 * (n - 2) / (1.0 - r2)
    out[ok] = stats.f.sf(F, 1, n - 2)
    return out


def _r_squared(y: np.ndarray, A: np.ndarray) -> float:
    yc = y - y.mean()
    sst = float(yc @ yc)
    if sst == 0:
        raise SelectionError("VIF is undefined for a constant column")
    if A.shape[1] == 0:
        return 0.0
    Ac = A - A.mean(axis=0)
    coef, *_ = np.linalg.lstsq(Ac, yc, rcond=None)
    resid = yc - Ac @ coef
    return 1.0 - float(resid @ resid) / sst


def _vif_from_r2(r2: float) -> float:
    if r2 >= 1.0 - _COLLINEAR_TOL:
        return math.inf
    return 1.0 / (1.0 - r2)


def vif_of(X: np.ndarray, j: int) -> float:
    others = [c for c in range(X.shape[1]) if c != j]
    return _vif_from_r2(_r_squared(X[:, j], X[:, others]))


def compute_vif(table: CohortTable, column: str) -> float:
    """1 / (1 - R^2) of ``column`` regressed (with intercept) on all other features."""
    if table.n_features < 2:
        raise SelectionError("VIF needs at least two features")
    if np.isnan(table.X).any():
        raise DataError("VIF needs complete data")
    return vif_of(table.X, table.index_of(column))


def _equal_frequency_bins(x: np.ndarray, bins: int) -> np.ndarray:
    edges = np.quantile(x, np.linspace(0.0, 1.0, bins + 1))[1:-1]
    return np.searchsorted(np.unique(edges), x, side="right")


def mi_bin_count(n: int) -> int:
    return math.ceil(math.sqrt(n / 5.0))


def estimate_mutual_information(x, y) -> float:
    """Histogram estimate of I(x; y) in nats.

    Each axis is cut into ceil(sqrt(n / 5)) equal-frequency bins. The plug-in
    value gets the Miller-Madow bias correction (occupied cells) and is
    clamped at zero.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = x.size
    if n != y.size:
        raise ValueError("x and y must have equal length")
    if n < 50:
        raise ValueError("mutual information estimate needs n >= 50")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return 0.0
    b = mi_bin_count(n)
    bx = _equal_frequency_bins(x, b)
    by = _equal_frequency_bins(y, b)
    nx, ny = bx.max() + 1, by.max() + 1
    joint = np.bincount(bx * ny + by, minlength=nx * ny).reshape(nx, ny) / n
    px = joint.sum(axis=1)
    py = joint.sum(axis=0)
    nz = joint > 0
    plug = float(np.sum(joint[nz] * np.log(joint[nz] / np.outer(px, py)[nz])))
    correction = (nz.sum() - (px > 0).sum() - (py > 0).sum() + 1) / (2.0 * n)
    return max(0.0, plug - correction)


def select_features(table: CohortTable, cfg: FeaturePipelineConfig | None = None):
    """Whitelist, univariate screen, VIF elimination, MI screen, top-k by MI.

    Statistics are computed against both targets; a feature passes a screen
    if it passes against either. Returns ``(table, audit)`` where the audit
    records every drop with its triggering statistic.
    """
    cfg = cfg or FeaturePipelineConfig()
    if np.isnan(table.X).any():
        raise DataError("feature selection needs complete (imputed) data")
    Y = table.targets
    names = table.feature_names
    audit: dict = {"candidates": len(names), "stages": {}}

    keep = [n for n in names if table.spec(n).domain_tag in cfg.domain_whitelist]
    audit["stages"]["whitelist"] = [
        {"feature": n, "domain_tag": table.spec(n).domain_tag} for n in names if n not in keep
    ]

    # 1. univariate screen
    X = table.select(keep).X
    p = np.minimum(univariate_pvalues(X, Y[:, 0]), univariate_pvalues(X, Y[:, 1]))
    audit["stages"]["univariate"] = [
        {"feature": n, "p_value": float(pv)} for n, pv in zip(keep, p) if not pv < cfg.p_value_cutoff
    ]
    keep = [n for n, pv in zip(keep, p) if pv < cfg.p_value_cutoff]

    # 2. VIF elimination, first-listed wins ties
    dropped_vif = []
    while len(keep) >= 2:
        X = table.select(keep).X
        vifs = [vif_of(X, j) for j in range(len(keep))]
        worst = int(np.argmax(vifs))
        if vifs[worst] < cfg.vif_cutoff:
            break
        v = vifs[worst]
        dropped_vif.append({"feature": keep[worst], "vif": None if math.isinf(v) else float(v)})
        del keep[worst]
    audit["stages"]["vif"] = dropped_vif

    # 3. mutual information screen
    mi = {
        n: max(
            estimate_mutual_information(table.column(n), Y[:, 0]),
            estimate_mutual_information(table.column(n), Y[:, 1]),
        )
        for n in keep
    }
    audit["stages"]["mutual_information"] = [
        {"feature": n, "mi": mi[n]} for n in keep if not mi[n] > cfg.mi_cutoff
    ]
    keep = [n for n in keep if mi[n] > cfg.mi_cutoff]

    # 4. cap at the target count, highest MI first
    capped = []
    if len(keep) > cfg.target_feature_count:
        ranked = sorted(keep, key=lambda n: (-mi[n], keep.index(n)))
        top = set(ranked[: cfg.target_feature_count])
        capped = [{"feature": n, "mi": mi[n]} for n in keep if n not in top]
        keep = [n for n in keep if n in top]
    audit["stages"]["top_k"] = capped

    if not keep:
        raise SelectionError(
            "every feature was eliminated; relax p_value_cutoff, vif_cutoff or mi_cutoff"
        )
    audit["selected"] = list(keep)
    audit["n_selected"] = len(keep)
    return table.select(keep), audit


# ---------------------------------------------------------------------------
# alignment


def normalize_name(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")


@dataclass(frozen=True)
class AlignmentMap:
    direct_matches: dict = field(default_factory=dict)
    defaulted: dict = field(default_factory=dict)
    coverage: float = 0.0
    unused_external: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "coverage": self.coverage,
            "direct_matches": dict(self.direct_matches),
            "defaulted": {k: (None if v is None or (isinstance(v, float) and math.isnan(v)) else v)
                          for k, v in self.defaulted.items()},
            "unused_external": list(self.unused_external),
        }


def align_features(
    external: CohortTable,
    reference_schema: Sequence[ColumnSpec],
    defaults: Mapping[str, float] | None = None,
    reference_medians: Mapping[str, float] | None = None,
):
    """Map an external cohort onto the reference feature columns.

    Names match after lowercasing and collapsing non-alphanumerics to
    underscores. Absent features are filled with the clinical default, else
    the reference training median (else left missing for imputation).
    """
    reference_schema = list(reference_schema)
    if not reference_schema:
        raise ConfigError("reference schema is empty")
    defaults = dict(defaults or {})
    medians = dict(reference_medians or {})
    ext_by_key: dict[str, str] = {}
    for name in external.feature_names:
        ext_by_key.setdefault(normalize_name(name), name)

    n = external.n_rows
    cols, direct, defaulted = [], {}, {}
    used = set()
    for spec in reference_schema:
        ext_name = ext_by_key.get(normalize_name(spec.name))
        if ext_name is not None:
            direct[ext_name] = spec.name
            used.add(ext_name)
            cols.append(external.column(ext_name))
        else:
            fill = defaults.get(spec.name, medians.get(spec.name, math.nan))
            defaulted[spec.name] = None if fill is None else float(fill)
            cols.append(np.full(n, math.nan if fill is None else float(fill)))
    coverage = len(direct) / len(reference_schema)
    if coverage < 0.5:
        log.warning("feature alignment coverage is low: %.1f%%", 100 * coverage)
    X = np.column_stack(cols) if cols else np.empty((n, 0))
    aligned = replace(external, schema=tuple(reference_schema), X=X)
    amap = AlignmentMap(
        direct_matches=direct,
        defaulted=defaulted,
        coverage=coverage,
        unused_external=[c for c in external.feature_names if c not in used],
    )
    return aligned, amap
