"""Clinical report assembly and plain-text rendering."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..cohort import TARGET_NAMES, CohortTable
from ..models.ensemble import PredictionSet
from .metrics import (
    aami_check,
    bhs_grade,
    bland_altman,
    core_metrics,
    coverage_in_band,
    coverage_probability,
    equity_ratio,
    hypotension_sensitivity,
    rmse,
    stratified_report,
    within_percentages,
)


@dataclass
class TargetReport:
    n: int
    rmse: float
    mae: float
    r2: float | None
    mean_bias: float
    error_sd: float
    within_5: float
    within_10: float
    within_15: float
    bhs_grade: str
    aami_pass: bool
    loa_lower: float
    loa_upper: float
    loa_width: float
    loa_acceptable: bool
    coverage: float | None
    coverage_in_band: bool | None
    mean_interval_width: float | None
    stratified: dict = field(default_factory=dict)
    equity: dict = field(default_factory=dict)
    hypotension_sensitivity: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def demographic_subgroups(table: CohortTable) -> dict:
    """Boolean masks for the equity comparisons available in ``table``:
    age under/over 65, sex, and the race proxy column."""
    out = {}
    names = set(table.feature_names)
    if "age" in names:
        old = table.column("age") >= 65
        out["age (<65 vs >=65)"] = {"<65": ~old, ">=65": old}
    if "sex_male" in names:
        m = table.column("sex_male") >= 0.5
        out["sex (female vs male)"] = {"female": ~m, "male": m}
    if "race_white" in names:
        w = table.column("race_white") >= 0.5
        out["race (white vs other)"] = {"white": w, "other": ~w}
    return out


def target_report(y_true, preds: PredictionSet, t: int, sbp_true=None, subgroups=None) -> TargetReport:
    y = np.asarray(y_true, dtype=float)
    p = preds.point[:, t]
    cm = core_metrics(y, p)
    w5, w10, w15 = within_percentages(y, p)
    ba = bland_altman(y, p)
    lo, hi = preds.lower[:, t], preds.upper[:, t]
    if np.all(np.isfinite(lo)):
        cov = coverage_probability(y, lo, hi)
        band = coverage_in_band(cov)
        width = float(np.mean(hi - lo))
    else:
        cov = band = width = None
    strat = {k: asdict(v) for k, v in stratified_report(y, p, sbp_true).items()}
    equity = {}
    for pair, masks in (subgroups or {}).items():
        rm = {g: rmse(y[m], p[m]) for g, m in masks.items() if m.sum() > 0}
        if len(rm) < 2 or min(rm.values()) <= 0:
            continue
        res = equity_ratio(rm, {g: int(m.sum()) for g, m in masks.items()})
        equity[pair] = {"rmse": rm, **res.to_dict()}
    return TargetReport(
        n=int(y.size), rmse=cm.rmse, mae=cm.mae, r2=cm.r2, mean_bias=cm.mean_bias, error_sd=cm.error_sd,
        within_5=w5, within_10=w10, within_15=w15, bhs_grade=bhs_grade(w5, w10, w15),
        aami_pass=aami_check(cm.mean_bias, cm.error_sd),
        loa_lower=ba.loa_lower, loa_upper=ba.loa_upper, loa_width=ba.width, loa_acceptable=ba.acceptable,
        coverage=cov, coverage_in_band=band, mean_interval_width=width,
        stratified=strat, equity=equity,
        hypotension_sensitivity=hypotension_sensitivity(y, p) if sbp_true is None else None,
    )


def clinical_report(table: CohortTable, preds: PredictionSet, subgroups=None) -> dict:
    """Per-target reports; strata always follow true SBP."""
    if preds.n_rows != table.n_rows:
        raise ValueError("predictions are not aligned to table rows")
    sbp = table.targets[:, 0]
    out = {}
    for t, name in enumerate(TARGET_NAMES):
        out[name] = target_report(table.targets[:, t], preds, t, None if t == 0 else sbp, subgroups)
    return out


def _fmt(v, spec=".2f"):
    if v is None:
        return "n/a"
    if isinstance(v, bool):
        return "yes" if v else "no"
    return format(v, spec)


def render_tables(reports: dict, title: str = "Performance") -> str:
    """Aligned plain-text summary: headline metrics, then strata."""
    rows = [
        ("RMSE (mmHg)", "rmse"), ("MAE (mmHg)", "mae"), ("R^2", "r2"),
        ("Mean bias (mmHg)", "mean_bias"), ("Error SD (mmHg)", "error_sd"),
        ("Within 5 mmHg (%)", "within_5"), ("Within 10 mmHg (%)", "within_10"),
        ("Within 15 mmHg (%)", "within_15"), ("BHS grade", "bhs_grade"), ("AAMI pass", "aami_pass"),
        ("LoA lower (mmHg)", "loa_lower"), ("LoA upper (mmHg)", "loa_upper"), ("LoA width (mmHg)", "loa_width"),
        ("Coverage", "coverage"), ("Mean interval width", "mean_interval_width"),
    ]
    names = list(reports)
    lines = [title, "-" * len(title), f"{'Metric':<24}" + "".join(f"{n.upper():>12}" for n in names)]
    for label, key in rows:
        vals = []
        for n in names:
            v = getattr(reports[n], key) if isinstance(reports[n], TargetReport) else reports[n][key]
            vals.append(v if isinstance(v, str) else _fmt(v, ".3f" if key == "coverage" else ".2f"))
        lines.append(f"{label:<24}" + "".join(f"{v:>12}" for v in vals))
    first = reports[names[0]]
    strat = first.stratified if isinstance(first, TargetReport) else first["stratified"]
    if strat:
        lines += ["", "Stratified (SBP)", f"{'Stratum':<18}{'n':>6}{'Within 5':>10}{'Grade':>7}{'Reliable':>10}"]
        for s, r in strat.items():
            lines.append(f"{s:<18}{r['n']:>6}{r['within_5']:>10.1f}{r['bhs_grade']:>7}{_fmt(r['reliable']):>10}")
    return "\n".join(lines) + "\n"
