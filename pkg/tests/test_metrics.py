import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clinbp.evaluate.metrics import (
    aami_check,
    bhs_grade,
    bland_altman,
    bootstrap_degradation_pvalue,
    core_metrics,
    coverage_in_band,
    coverage_probability,
    equity_ratio,
    generalizability,
    hypotension_sensitivity,
    stratified_report,
    threshold_auc,
    within_percentages,
)


def test_core_metrics_examples():
    y = np.array([100.0, 120.0, 140.0])
    m = core_metrics(y, y)
    assert (m.rmse, m.mae, m.r2, m.mean_bias) == (0, 0, 1, 0)
    assert core_metrics(y, np.full(3, y.mean())).r2 == pytest.approx(0.0)
    m = core_metrics([10.0, 10.0], [12.0, 8.0])
    assert (m.rmse, m.mae, m.mean_bias, m.error_sd) == (2.0, 2.0, 0.0, 2.0)
    assert core_metrics([5.0, 5.0], [4.0, 6.0]).r2 is None


def test_bias_sign_is_prediction_minus_truth():
    assert core_metrics([100.0, 100.0], [103.0, 105.0]).mean_bias == 4.0


def test_core_metrics_requires_two_rows():
    with pytest.raises(ValueError):
        core_metrics([1.0], [1.0])


def test_bhs_examples():
    assert bhs_grade(57.0, 91.1, 99.0) == "B"
    assert bhs_grade(60, 85, 95) == "A"
    assert bhs_grade(0, 0, 0) == "D"
    assert bhs_grade(40, 65, 85) == "C"
    with pytest.raises(ValueError):
        bhs_grade(50, 40, 90)


def test_aami_examples():
    assert aami_check(-0.15, 6.03)
    assert aami_check(5.0, 8.0)
    assert not aami_check(5.1, 7.0)
    assert not aami_check(0.0, 8.01)


def test_bland_altman_examples():
    ba = bland_altman([0.0, 0.0], [-1.0, 1.0])
    assert ba.bias == 0
    assert (ba.loa_lower, ba.loa_upper) == pytest.approx((-1.96, 1.96))
    assert ba.width == pytest.approx(3.92) and ba.acceptable
    z = bland_altman([1.0, 2.0], [1.0, 2.0])
    assert (z.loa_lower, z.loa_upper, z.width, z.acceptable) == (0, 0, 0, True)
    rng = np.random.default_rng(0)
    d = rng.normal(0, 6.03, 200_000)
    big = bland_altman(np.zeros_like(d), d)
    assert big.width == pytest.approx(2 * 1.96 * 6.03, abs=0.15)
    assert big.width == pytest.approx(23.6, abs=0.15) and not big.acceptable


def test_coverage_examples():
    y = np.array([1.0, 2.0, 3.0])
    assert coverage_probability(y, y - 1, y + 1) == 1.0
    assert coverage_probability(y, y + 1, y + 1) == 0.0
    assert coverage_probability(y, y, y) == 1.0  # closed interval
    with pytest.raises(ValueError):
        coverage_probability(y, y + 1, y)
    assert coverage_in_band(0.75) and coverage_in_band(0.85) and not coverage_in_band(0.86)


def test_equity_examples():
    r = equity_ratio({"young": 6.0, "old": 6.48})
    assert round(r.ratio, 2) == 1.08 and r.passed
    r = equity_ratio({"a": 6.0, "b": 7.38})
    assert round(r.ratio, 2) == 1.23 and not r.passed
    r = equity_ratio({"a": 5.0, "b": 5.0}, {"a": 9, "b": 100})
    assert r.ratio == 1.0 and r.passed and r.low_n == ["a"]
    with pytest.raises(ValueError):
        equity_ratio({"a": 1.0})


def test_generalizability_examples():
    assert generalizability(6.03, 7.84) == pytest.approx(30.0, abs=0.1)
    assert generalizability(7.13, 9.31) == pytest.approx(30.6, abs=0.1)
    assert generalizability(5.0, 5.0) == 0.0
    with pytest.raises(ValueError):
        generalizability(0.0, 1.0)


def test_stratified_report_examples():
    y = np.array([85.0] * 8 + [110.0] * 40)
    p = y.copy()
    p[:8] += 7.0
    rep = stratified_report(y, p)
    assert set(rep) == {"Hypotension", "Normal"}
    assert rep["Hypotension"].within_5 == 0.0 and rep["Hypotension"].bhs_grade == "D"
    assert rep["Hypotension"].n == 8 and not rep["Hypotension"].reliable
    assert rep["Normal"].bhs_grade == "A" and rep["Normal"].reliable
    assert hypotension_sensitivity(y, p) == 0.0
    assert hypotension_sensitivity(y, y) == 1.0
    assert hypotension_sensitivity(np.array([100.0, 120.0]), np.array([80.0, 120.0])) is None


def test_stratify_on_supplied_sbp():
    dbp = np.array([60.0, 70.0])
    rep = stratified_report(dbp, dbp, sbp_true=np.array([85.0, 150.0]))
    assert set(rep) == {"Hypotension", "Hypertension"}


def test_bootstrap_pvalue():
    rng = np.random.default_rng(0)
    a = rng.chisquare(1, 400)
    assert bootstrap_degradation_pvalue(a, 3 * rng.chisquare(1, 300)) < 0.01
    p = bootstrap_degradation_pvalue(a, rng.chisquare(1, 300))
    assert p > 0.01


def test_bootstrap_seeded():
    rng = np.random.default_rng(1)
    a, b = rng.random(50), rng.random(60)
    assert bootstrap_degradation_pvalue(a, b, seed=3) == bootstrap_degradation_pvalue(a, b, seed=3)


def test_threshold_auc():
    y = np.array([90.0, 95.0, 105.0, 110.0])
    assert threshold_auc(y, y, 100) == 1.0
    assert threshold_auc(y, -y, 100) == 0.0
    assert threshold_auc(y, np.zeros(4), 100) == 0.5
    assert threshold_auc(y, y, 200) is None


finite = st.floats(-300, 300, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=50))
def test_within_nested(pairs):
    y, p = map(np.array, zip(*pairs))
    w5, w10, w15 = within_percentages(y, p)
    assert 0 <= w5 <= w10 <= w15 <= 100


pct = st.floats(0, 100)


@settings(max_examples=200, deadline=None)
@given(st.lists(pct, min_size=3, max_size=3), st.integers(0, 2), st.floats(0, 50))
def test_grade_monotone(w, idx, bump):
    w = sorted(w)
    better = list(w)
    better[idx] = min(100.0, better[idx] + bump)
    for j in range(idx + 1, 3):
        better[j] = max(better[j], better[idx])
    order = "ABCD"
    assert order.index(bhs_grade(*better)) <= order.index(bhs_grade(*w))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.1, 50), min_size=2, max_size=6), st.floats(0.01, 100))
def test_equity_scale_invariant(vals, c):
    a = equity_ratio({i: v for i, v in enumerate(vals)})
    b = equity_ratio({i: v * c for i, v in enumerate(vals)})
    assert a.passed == b.passed or math.isclose(a.ratio, 1.2, rel_tol=1e-9)
    assert b.ratio == pytest.approx(a.ratio, rel=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(-20, 20), st.integers(-20, 20), st.integers(0, 12)), min_size=1, max_size=40))
def test_coverage_monotone_transform_invariant(rows):
    # quarter-unit grid keeps the transforms strictly increasing in floating point
    y, lo, w = (np.array(v) / 4.0 for v in zip(*rows))
    hi = lo + w
    base = coverage_probability(y, lo, hi)
    # exp and x -> x^3 + x are strictly increasing
    assert coverage_probability(np.exp(y), np.exp(lo), np.exp(hi)) == base
    f = lambda v: v ** 3 + v  # noqa: E731
    assert coverage_probability(f(y), f(lo), f(hi)) == base
