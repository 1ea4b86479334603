"""End-to-end pipeline stages shared by the CLI commands."""

from __future__ import annotations

import contextlib
import logging
from dataclasses import dataclass, replace

import numpy as np

from ..cohort import TARGET_NAMES, ColumnSpec, CohortTable, generate_synthetic_pair, load_cohort, load_schema
from ..errors import ClinBPError, ConfigError, InvariantError
from ..evaluate.ablation import ablation_run
from ..evaluate.cv import cross_validate
from ..evaluate.folds import plan_group_kfold
from ..evaluate.metrics import bootstrap_degradation_pvalue, generalizability
from ..evaluate.report import clinical_report, demographic_subgroups
from ..evaluate.shift import shift_profile
from ..features import align_features, engineer, select_features
from ..impute import impute
from ..leakage import remove_leakage
from ..models.boosting import fit_gbm
from ..models.ensemble import FittedEnsemble, PredictionSet, fit_ensemble, predict_with_intervals
from ..models.tree import presort
from ..models.tuning import tree_search_space, tune_hyperparameters
from .config import RunConfig

log = logging.getLogger(__name__)


@contextlib.contextmanager
def stage(name: str):
    """Prefix errors raised inside a pipeline stage with the stage name."""
    try:
        yield
    except ClinBPError as exc:
        if exc.args and isinstance(exc.args[0], str) and not exc.args[0].startswith(f"[{name}]"):
            exc.args = (f"[{name}] {exc.args[0]}",) + exc.args[1:]
        raise


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def load_internal(cfg: RunConfig) -> CohortTable:
    with stage("load"):
        if cfg.synthetic is not None:
            return generate_synthetic_pair(cfg.synthetic)[0]
        schema = load_schema(cfg.data.schema) if cfg.data.schema else None
        if schema is None:
            raise ConfigError("data.schema is required with data.cohort")
        return load_cohort(cfg.data.cohort, schema, "internal")


def load_external(cfg: RunConfig, path=None, schema_path=None) -> CohortTable:
    with stage("load"):
        if path is None and cfg.synthetic is not None:
            return generate_synthetic_pair(cfg.synthetic)[1]
        path = path or cfg.data.external
        schema_path = schema_path or cfg.data.external_schema or cfg.data.schema
        if path is None or schema_path is None:
            raise ConfigError("an external cohort path and schema are required")
        return load_cohort(path, load_schema(schema_path), "external")


@dataclass
class Prepared:
    raw_clean: CohortTable  # after leakage removal, before imputation
    imputed: CohortTable
    selected: CohortTable
    sections: dict


def prepare(raw: CohortTable, cfg: RunConfig) -> Prepared:
    """Leakage removal, imputation, feature construction and selection."""
    with stage("leakage"):
        clean, leak = remove_leakage(raw, cfg.leakage)
    with stage("impute"):
        imputed, audit = impute(clean, cfg.impute)
    with stage("features"):
        selected, sel_audit = select_features(engineer(imputed, cfg.features), cfg.features)
    sections = {
        "cohort": {
            "source_tag": raw.source_tag,
            "n_rows": raw.n_rows,
            "n_groups": int(len(set(raw.group_id))),
            "n_raw_features": raw.n_features,
            "filter_counts": dict(raw.filter_counts),
        },
        "leakage": leak.to_dict(),
        "imputation": audit.to_dict(),
        "feature_selection": sel_audit,
    }
    return Prepared(clean, imputed, selected, sections)


def tune(selected: CohortTable, cfg: RunConfig, threads: int = 1) -> tuple[dict, dict | None]:
    """Tune the boosting parameters on grouped-CV RMSE (folds fixed once).
    Returns (gbm overrides, search record)."""
    if cfg.tuning.method == "none":
        return {}, None
    plan = plan_group_kfold(selected.group_id, cfg.cv_folds, cfg.seed)
    splits = list(plan.splits(selected.group_id))
    X, Y = selected.X, selected.targets
    orders = [presort(X[tr]) for tr, _ in splits]
    base = cfg.model.gbm

    def objective(p):
        params = base.replace(**p).check_search_bounds()
        errs = []
        for (tr, te), order in zip(splits, orders):
            for t in range(2):
                m = fit_gbm(X[tr], Y[tr, t], params, order=order)
                errs.append(np.mean((m.predict(X[te]) - Y[te, t]) ** 2))
        return float(np.sqrt(np.mean(errs)))

    res = tune_hyperparameters(objective, tree_search_space(), cfg.tuning.method, cfg.tuning.budget,
                               cfg.seed, threads)
    return dict(res.best_params), res.to_dict()


def reference_state(prep: Prepared) -> dict:
    """What scoring needs to rebuild features for a new cohort."""
    names = prep.raw_clean.feature_names
    med = np.median(prep.imputed.X, axis=0)
    return {
        "reference_schema": [c.to_dict() for c in prep.raw_clean.schema],
        "reference_medians": {n: float(v) for n, v in zip(names, med)},
    }


def series(table: CohortTable, preds: PredictionSet) -> dict:
    """Plot-ready columns: truth, prediction, Bland-Altman mean/difference
    and interval bounds per target."""
    out = {"group_id": list(table.group_id)}
    for t, name in enumerate(TARGET_NAMES):
        y, p = table.targets[:, t], preds.point[:, t]
        out[f"{name}_true"] = y
        out[f"{name}_pred"] = p
        out[f"{name}_ba_mean"] = 0.5 * (y + p)
        out[f"{name}_ba_diff"] = p - y
        out[f"{name}_lower"] = preds.lower[:, t]
        out[f"{name}_upper"] = preds.upper[:, t]
    return out


@dataclass
class TrainResult:
    model: FittedEnsemble
    report: dict
    cv_series: dict
    text: str
    internal_sq_errors: dict


def train(cfg: RunConfig, threads: int = 1) -> TrainResult:
    from ..evaluate.report import render_tables

    raw = load_internal(cfg)
    prep = prepare(raw, cfg)
    selected = prep.selected
    with stage("tuning"):
        overrides, search = tune(selected, cfg, threads)
    ens_cfg = replace(cfg.model, gbm=cfg.model.gbm.replace(**overrides)) if overrides else cfg.model
    ens_cfg = replace(ens_cfg, transform_columns=tuple(c for c in ens_cfg.transform_columns if c in selected.feature_names))
    subgroups = demographic_subgroups(prep.imputed)
    with stage("cv"):
        cv = cross_validate(selected, ens_cfg, cfg.cv_folds, cfg.seed, threads)
        cv_reports = clinical_report(selected, cv.predictions, subgroups)
    with stage("fit"):
        meta = reference_state(prep)
        meta["selected_features"] = selected.feature_names
        meta["cv_rmse"] = {n: cv_reports[n].rmse for n in TARGET_NAMES}
        model = fit_ensemble(selected, ens_cfg, threads, meta)
        train_pred = predict_with_intervals(model, selected)
        tiers = {}
        for t, name in enumerate(TARGET_NAMES):
            vals, counts = np.unique(train_pred.risk_tier[:, t].astype(str), return_counts=True)
            tiers[name] = {str(v): int(c) for v, c in zip(vals, counts)}
    report = {
        **prep.sections,
        "tuning": search,
        "model": {
            "n_features": len(model.feature_names),
            "alpha": {n: model.targets[n].alpha for n in TARGET_NAMES},
            "alpha_degenerate": {n: model.targets[n].alpha_degenerate for n in TARGET_NAMES},
            "meta_weights": {n: model.targets[n].stacked.meta.coef.tolist() for n in TARGET_NAMES},
            "gbm_params": ens_cfg.gbm.to_dict(),
            "forest_params": ens_cfg.forest.to_dict(),
            "width_cuts": {n: list(model.targets[n].width_cuts) for n in TARGET_NAMES},
            "schema_hash": model.schema_hash,
        },
        "cv_metrics": {n: r.to_dict() for n, r in cv_reports.items()},
        "uncertainty": {
            n: {
                "coverage": cv_reports[n].coverage,
                "coverage_in_band": cv_reports[n].coverage_in_band,
                "mean_interval_width": cv_reports[n].mean_interval_width,
                "bound_swaps": cv.predictions.n_swapped.get(n, 0),
                "training_tier_counts": tiers[n],
            }
            for n in TARGET_NAMES
        },
        "folds": {"k": cv.plan.k, "fold_rmse": cv.fold_rmse},
    }
    if cfg.ablation:
        with stage("ablation"):
            base = np.array([cv_reports[n].rmse for n in TARGET_NAMES])
            report["ablation"] = ablation_run(selected, ens_cfg, cfg.cv_folds, cfg.seed, threads=threads, baseline=base)
    sq = {n: ((cv.predictions.point[:, t] - selected.targets[:, t]) ** 2).tolist() for t, n in enumerate(TARGET_NAMES)}
    text = render_tables(cv_reports, "Cross-validated performance")
    return TrainResult(model, _jsonable(report), series(selected, cv.predictions), text, sq)


def prepare_for_scoring(raw: CohortTable, model: FittedEnsemble, cfg: RunConfig):
    """Leakage removal, alignment to the training schema, imputation and the
    training feature construction, ending on the model's columns."""
    meta = model.metadata
    with stage("leakage"):
        clean, leak = remove_leakage(raw, cfg.leakage)
    with stage("align"):
        ref = [ColumnSpec.from_dict(c) for c in meta["reference_schema"]]
        aligned, amap = align_features(clean, ref, cfg.impute.clinical_defaults, meta["reference_medians"])
    with stage("impute"):
        imputed, audit = impute(aligned, cfg.impute)
    with stage("features"):
        table = engineer(imputed, cfg.features).select(meta["selected_features"])
    return clean, aligned, amap, imputed, table, {"leakage": leak.to_dict(), "imputation": audit.to_dict()}


def validate_external(model: FittedEnsemble, external: CohortTable, internal: CohortTable, cfg: RunConfig,
                      internal_sq_errors: dict | None = None) -> tuple[dict, PredictionSet, CohortTable]:
    clean, aligned, amap, imputed, table, sections = prepare_for_scoring(external, model, cfg)
    with stage("predict"):
        preds = predict_with_intervals(model, table)
    with stage("evaluate"):
        reports = clinical_report(table, preds, demographic_subgroups(imputed))
        # shift is measured on columns matched by name, before imputation
        int_clean, _ = remove_leakage(internal, cfg.leakage)
        matched = list(amap.direct_matches.values())
        ext_matched = aligned.select(matched)
        profile = shift_profile(int_clean, ext_matched, alignment_coverage=amap.coverage)
        gen, sig = {}, {}
        for t, name in enumerate(TARGET_NAMES):
            internal_rmse = model.metadata["cv_rmse"][name]
            gen[name] = generalizability(internal_rmse, reports[name].rmse)
            if internal_sq_errors:
                ext_sq = (preds.point[:, t] - table.targets[:, t]) ** 2
                sig[name] = bootstrap_degradation_pvalue(internal_sq_errors[name], ext_sq, seed=cfg.seed)
        profile.generalizability = gen
    section = {
        **sections,
        "alignment": amap.to_dict(),
        "alignment_warning": amap.coverage < 0.5,
        "metrics": {n: r.to_dict() for n, r in reports.items()},
        "shift": profile.to_dict(),
        "generalizability": gen,
        "degradation_pvalue": sig,
        "internal_cv_rmse": dict(model.metadata["cv_rmse"]),
    }
    return _jsonable(section), preds, table


def external_rmse_degradation(cfg: RunConfig, threads: int = 1) -> dict:
    """Train on the internal cohort and score the external one; convenience
    wrapper for shift sweeps."""
    res = train(cfg, threads)
    ext = load_external(cfg)
    section, _, _ = validate_external(res.model, ext, load_internal(cfg), cfg)
    return section["generalizability"]


def assert_nested(report: dict) -> None:
    for name, r in report.get("cv_metrics", {}).items():
        if not r["within_5"] <= r["within_10"] <= r["within_15"]:
            raise InvariantError(f"{name}: within-threshold percentages are not nested")

