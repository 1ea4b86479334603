import numpy as np
import pytest
from conftest import make_table

from clinbp.evaluate.ablation import ablation_run, permutation_importance
from clinbp.evaluate.cv import cross_validate, cv_rmse
from clinbp.evaluate.report import clinical_report, demographic_subgroups, render_tables
from clinbp.models.ensemble import EnsembleConfig, fit_ensemble
from clinbp.models.params import TreeParams

FAST = EnsembleConfig(
    gbm=TreeParams(max_depth=2, min_samples_leaf=5, n_estimators=15, learning_rate=0.2, subsample=0.8),
    forest=TreeParams(max_depth=4, min_samples_leaf=3, n_estimators=6, feature_fraction=0.5),
    stack_folds=3,
)


@pytest.fixture(scope="module")
def causal_table():
    """SBP and DBP driven by one vitals feature; other categories are noise."""
    rng = np.random.default_rng(0)
    n = 300
    X = rng.normal(size=(n, 4))
    sbp = 120 + 10 * X[:, 0] + rng.normal(size=n)
    dbp = 70 + 6 * X[:, 0] + rng.normal(size=n)
    groups = [f"p{i // 2}" for i in range(n)]
    return make_table(X, names=["cause", "lab", "med", "dup_med"],
                      targets=np.column_stack([sbp, dbp]), groups=groups,
                      tags=["vitals", "laboratory", "medication", "medication"])


def test_cv_folds_are_grouped(causal_table):
    res = cross_validate(causal_table, FAST, k=4, seed=1)
    assert len(res.fold_rmse) == 4
    for g in set(causal_table.group_id):
        assert len(set(res.fold_of_row[causal_table.group_id == g])) == 1
    assert np.all(np.isfinite(res.predictions.point))


def test_cv_thread_invariant(causal_table):
    a = cv_rmse(causal_table, FAST, k=3, seed=2, threads=1)
    b = cv_rmse(causal_table, FAST, k=3, seed=2, threads=3)
    assert np.array_equal(a, b)


def test_ablation_single_causal_feature(causal_table):
    res = ablation_run(causal_table, FAST, k=3, seed=0, categories=("V", "L", "M", "T"))
    v = res["categories"]["V"]["impact"]
    assert v["sbp"]["delta"] > 5 and v["sbp"]["percent"] > 100
    assert abs(res["categories"]["L"]["impact"]["sbp"]["percent"]) < 10
    assert res["categories"]["T"]["skipped"] == "no features in this category"
    q = res["components"]["quantile"]["impact"]
    assert q["sbp"]["delta"] == 0 and q["dbp"]["delta"] == 0
    base = res["baseline"]["sbp"]
    assert v["sbp"]["delta"] == pytest.approx(v["sbp"]["rmse"] - base)
    assert v["sbp"]["percent"] == pytest.approx(100 * v["sbp"]["delta"] / base)


def test_ablation_all_features_one_category():
    rng = np.random.default_rng(1)
    t = make_table(rng.normal(size=(60, 2)))
    res = ablation_run(t, FAST, k=3, categories=("V",), components=())
    assert "skipped" in res["categories"]["V"]


def test_permutation_importance(causal_table):
    model = fit_ensemble(causal_table, FAST)
    imp = permutation_importance(model, causal_table, seed=3)
    assert max(imp, key=imp.get) == "cause"
    assert abs(imp["lab"]) < 0.1 * imp["cause"]
    assert imp == permutation_importance(model, causal_table, seed=3)


def test_clinical_report_and_render(causal_table):
    model = fit_ensemble(causal_table, FAST)
    from clinbp.models.ensemble import predict_with_intervals

    preds = predict_with_intervals(model, causal_table)
    rep = clinical_report(causal_table, preds)
    assert rep["sbp"].stratified and sum(r["n"] for r in rep["sbp"].stratified.values()) == causal_table.n_rows
    # DBP rows are stratified by true SBP
    assert {k: v["n"] for k, v in rep["dbp"].stratified.items()} == {k: v["n"] for k, v in rep["sbp"].stratified.items()}
    assert rep["dbp"].hypotension_sensitivity is None
    assert 0 <= rep["sbp"].coverage <= 1
    text = render_tables(rep)
    assert "RMSE (mmHg)" in text and "Stratified (SBP)" in text


def test_demographic_subgroups_and_equity():
    rng = np.random.default_rng(2)
    n = 200
    X = np.column_stack([rng.uniform(30, 90, n), rng.integers(0, 2, n), rng.normal(size=n)])
    t = make_table(X, names=["age", "sex_male", "x"])
    masks = demographic_subgroups(t)
    assert set(masks) == {"age (<65 vs >=65)", "sex (female vs male)"}
    m = masks["age (<65 vs >=65)"]
    assert np.array_equal(m[">=65"], X[:, 0] >= 65) and not np.any(m["<65"] & m[">=65"])
