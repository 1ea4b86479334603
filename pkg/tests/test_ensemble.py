import numpy as np
import pytest
from conftest import make_table

from clinbp.cohort import Stratum
from clinbp.errors import ConfigError, SchemaMismatchError
from clinbp.models.ensemble import (
    EnsembleConfig,
    _risk_tiers,
    fit_ensemble,
    fit_stratified,
    predict_with_intervals,
)
from clinbp.models.params import TreeParams
from clinbp.models.persistence import load_model, save_model

Z90 = 1.2815515655446004
FAST = EnsembleConfig(
    gbm=TreeParams(max_depth=2, min_samples_leaf=5, n_estimators=15, learning_rate=0.2, subsample=0.8),
    forest=TreeParams(max_depth=4, min_samples_leaf=3, n_estimators=6, feature_fraction=0.5),
    stack_folds=3,
)


def gaussian_table(n, sigma, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 4))
    sbp = 120 + X @ [6.0, -4.0, 3.0, 0.0] + sigma * rng.normal(size=n)
    dbp = 70 + X @ [3.0, 2.0, 0.0, -2.0] + sigma * rng.normal(size=n)
    return make_table(X, targets=np.column_stack([sbp, dbp]))


@pytest.fixture(scope="module")
def fitted():
    table = gaussian_table(400, 5.0, 0)
    return table, fit_ensemble(table, FAST)


def test_risk_tier_boundaries():
    w = np.array([1.0, 2.0, 2.5, 3.0, 3.1])
    assert list(_risk_tiers(w, (2.0, 3.0))) == ["Low", "Low", "Medium", "Medium", "High"]


def test_identical_widths_all_low():
    w = np.full(10, 4.0)
    cuts = tuple(np.percentile(w, [33, 66]))
    assert set(_risk_tiers(w, cuts)) == {"Low"}


def test_interval_width_matches_gaussian_quantiles():
    sigma = 5.0
    model = fit_ensemble(gaussian_table(2000, sigma, 1), FAST)
    test = gaussian_table(1000, sigma, 2)
    preds = predict_with_intervals(model, test)
    expected = 2 * Z90 * sigma
    for t in range(2):
        assert preds.interval_width[:, t].mean() == pytest.approx(expected, rel=0.15)


def test_prediction_set_contract(fitted):
    table, model = fitted
    preds = predict_with_intervals(model, table)
    assert preds.point.shape == preds.lower.shape == (table.n_rows, 2)
    assert np.all(preds.lower <= preds.upper)
    assert set(np.unique(preds.risk_tier)) <= {"Low", "Medium", "High"}
    frame = preds.to_frame()
    assert list(frame.columns[:5]) == ["sbp_pred", "sbp_lower", "sbp_upper", "sbp_width", "sbp_risk_tier"]


def test_point_is_alpha_blend(fitted):
    table, model = fitted
    Z = model.preprocessor.transform(table.X)
    for t, name in enumerate(("sbp", "dbp")):
        tm = model.targets[name]
        prim = tm.primary.predict(Z)
        stk = tm.stacked.predict(Z)
        np.testing.assert_allclose(predict_with_intervals(model, table).point[:, t],
                                   tm.alpha * prim + (1 - tm.alpha) * stk, rtol=0, atol=1e-9)


def test_schema_mismatch(fitted):
    table, model = fitted
    names = list(reversed(table.feature_names))
    with pytest.raises(SchemaMismatchError):
        predict_with_intervals(model, table.X, names)


def test_rejects_missing_values(fitted):
    table, model = fitted
    X = table.X.copy()
    X[0, 0] = np.nan
    with pytest.raises(ConfigError):
        predict_with_intervals(model, X)


def test_targets_are_independent():
    table = gaussian_table(200, 5.0, 3)
    other = make_table(table.X, targets=np.column_stack([table.targets[:, 0], table.targets[::-1, 1]]))
    a = predict_with_intervals(fit_ensemble(table, FAST), table)
    b = predict_with_intervals(fit_ensemble(other, FAST), table)
    assert np.array_equal(a.point[:, 0], b.point[:, 0])
    assert np.array_equal(a.lower[:, 0], b.lower[:, 0])
    assert not np.array_equal(a.point[:, 1], b.point[:, 1])


def test_fit_is_deterministic(fitted):
    table, model = fitted
    again = fit_ensemble(table, FAST, threads=4)
    assert again.to_dict() == model.to_dict()


def test_component_toggles(fitted):
    table, _ = fitted
    primary_only = fit_ensemble(table, EnsembleConfig(**{**FAST.__dict__, "use_stacking": False}))
    stacked_only = fit_ensemble(table, EnsembleConfig(**{**FAST.__dict__, "use_primary_blend": False}))
    no_q = fit_ensemble(table, EnsembleConfig(**{**FAST.__dict__, "use_quantiles": False}))
    assert all(t.alpha == 1.0 for t in primary_only.targets.values())
    assert all(t.alpha == 0.0 for t in stacked_only.targets.values())
    p = predict_with_intervals(no_q, table)
    assert np.isnan(p.lower).all() and not no_q.has_intervals


def test_persistence_roundtrip(fitted, tmp_path):
    table, model = fitted
    save_model(model, tmp_path / "a.gz", {"note": 1})
    save_model(model, tmp_path / "b.gz", {"note": 1})
    assert (tmp_path / "a.gz").read_bytes() == (tmp_path / "b.gz").read_bytes()
    loaded, extra = load_model(tmp_path / "a.gz")
    assert extra["note"] == 1
    a = predict_with_intervals(model, table)
    b = predict_with_intervals(loaded, table)
    for field in ("point", "lower", "upper"):
        assert np.array_equal(getattr(a, field), getattr(b, field))
    assert np.array_equal(a.risk_tier, b.risk_tier)


def test_load_rejects_garbage(tmp_path):
    p = tmp_path / "x.gz"
    p.write_text("not gzip")
    with pytest.raises(ConfigError):
        load_model(p)


def stratum_table(counts, seed=0):
    """Patients with one row each; SBP centred inside each requested stratum."""
    centre = {"Hypotension": 80.0, "Normal": 110.0, "Prehypertension": 130.0, "Hypertension": 155.0}
    rng = np.random.default_rng(seed)
    sbp = np.concatenate([np.full(n, centre[s]) + rng.uniform(-4, 4, n) for s, n in counts.items()])
    n = sbp.size
    X = np.column_stack([sbp + rng.normal(size=n), rng.normal(size=(n, 2))])
    return make_table(X, targets=np.column_stack([sbp, 0.6 * sbp + rng.normal(size=n)]))


def test_stratified_small_stratum_flagged():
    table = stratum_table({"Hypotension": 8, "Normal": 30, "Prehypertension": 29})
    strat = fit_stratified(table, FAST, min_stratum=30)
    assert set(strat.models) == {"Normal"}
    assert sorted(strat.flagged) == ["Hypotension", "Prehypertension"]
    assert strat.counts["Hypotension"] == 8 and strat.counts["Hypertension"] == 0
    preds = strat.predict(table)
    assert preds.point.shape == (table.n_rows, 2)


def test_stratified_single_stratum():
    table = stratum_table({"Normal": 60})
    strat = fit_stratified(table, FAST)
    assert list(strat.models) == [Stratum.NORMAL.value]
    assert strat.flagged == []


def test_stratified_counts_patients_not_rows():
    table = stratum_table({"Normal": 40})
    groups = np.array([f"p{i // 2}" for i in range(40)], dtype=object)
    table = make_table(table.X, targets=table.targets, groups=groups)
    strat = fit_stratified(table, FAST, min_stratum=30)
    assert strat.flagged == ["Normal"]
