import itertools
import math

import numpy as np
import pytest
import statsmodels.api as sm
from hypothesis import given, settings
from hypothesis import strategies as st

from clinbp.models.linear import fit_quantile, fit_ridge, pinball_loss, quantile_objective


def quantile_argmin_interval(y, tau):
    """Minimisers of sum rho_tau(y - c): [y_(ceil(n tau)), y_(floor(n tau) + 1)]."""
    s = np.sort(y)
    n = s.size
    lo = s[max(math.ceil(n * tau), 1) - 1]
    hi = s[min(math.floor(n * tau) + 1, n) - 1]
    return lo, hi


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.1, 0.5, 0.9]), st.integers(5, 200))
def test_intercept_only_is_empirical_quantile(seed, tau, n):
    y = np.random.default_rng(seed).normal(size=n) * 10
    m = fit_quantile(np.empty((n, 0)), y, tau, 0.0)
    lo, hi = quantile_argmin_interval(y, tau)
    scale = np.ptp(y) or 1.0
    assert lo - 1e-6 * scale <= m.intercept <= hi + 1e-6 * scale
    # objective equals the minimum over constants
    best = min(pinball_loss(y, c, tau) for c in y)
    assert m.objective == pytest.approx(best, rel=1e-9, abs=1e-9)


def test_pinball_perfect_is_zero():
    y = np.arange(5.0)
    assert pinball_loss(y, y, 0.3) == 0.0


def test_pinball_asymmetry():
    assert pinball_loss([1.0], [0.0], 0.9) == pytest.approx(0.9)
    assert pinball_loss([0.0], [1.0], 0.9) == pytest.approx(0.1)


def _lad_vertex_oracle(x, y):
    """Exact LAD line: an optimum passes through two data points."""
    best = (np.inf, None)
    for i, j in itertools.combinations(range(len(x)), 2):
        if x[i] == x[j]:
            continue
        b = (y[j] - y[i]) / (x[j] - x[i])
        a = y[i] - b * x[i]
        loss = np.sum(np.abs(y - a - b * x))
        if loss < best[0]:
            best = (loss, (a, b))
    return best


def test_median_regression_matches_vertex_enumeration():
    rng = np.random.default_rng(0)
    x = rng.normal(size=60)
    y = 1.0 + 2.0 * x + rng.standard_t(3, size=60)
    m = fit_quantile(x[:, None], y, 0.5, 0.0)
    loss, _ = _lad_vertex_oracle(x, y)
    assert 2 * m.objective == pytest.approx(loss, rel=1e-6)


def test_median_slope_close_to_ols_on_symmetric_noise():
    rng = np.random.default_rng(1)
    x = rng.normal(size=200)
    y = 3.0 - 1.5 * x + rng.normal(size=200)
    m = fit_quantile(x[:, None], y, 0.5, 0.0)
    ols = np.polyfit(x, y, 1)[0]
    assert m.coef[0] == pytest.approx(ols, abs=0.15)


@pytest.mark.parametrize("tau", [0.1, 0.9])
def test_matches_statsmodels_quantreg_objective(tau):
    rng = np.random.default_rng(2)
    X = rng.normal(size=(150, 3))
    y = X @ [1.0, -2.0, 0.5] + rng.normal(size=150)
    m = fit_quantile(X, y, tau, 0.0)
    ref = sm.QuantReg(y, sm.add_constant(X)).fit(q=tau, max_iter=5000)
    ref_obj = quantile_objective(X, y, tau, 0.0, ref.params[0], ref.params[1:])
    assert m.objective <= ref_obj * (1 + 1e-6)
    assert m.objective == pytest.approx(ref_obj, rel=1e-4)


def test_l1_penalty_shrinks_and_objective_consistent():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(100, 5))
    y = X[:, 0] + 0.1 * rng.normal(size=100)
    free = fit_quantile(X, y, 0.5, 0.0)
    pen = fit_quantile(X, y, 0.5, 20.0)
    assert np.abs(pen.coef).sum() < np.abs(free.coef).sum()
    assert pen.objective == pytest.approx(quantile_objective(X, y, 0.5, 20.0, pen.intercept, pen.coef))


def test_lower_head_beats_constants():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(300, 4))
    y = X @ [2.0, 0, 1, 0] + rng.normal(size=300)
    m = fit_quantile(X, y, 0.1, 0.1)
    train = pinball_loss(y, m.predict(X), 0.1)
    assert train <= min(pinball_loss(y, c, 0.1) for c in np.quantile(y, [0.05, 0.1, 0.2]))


def test_tau_validation():
    with pytest.raises(ValueError):
        fit_quantile(np.zeros((3, 1)), np.zeros(3), 1.0)


def test_ridge_closed_form():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(50, 2))
    y = X @ [1.0, -1.0] + 4.0 + rng.normal(size=50)
    m = fit_ridge(X, y, 1.0)
    Xc = X - X.mean(axis=0)
    w = np.linalg.solve(Xc.T @ Xc + np.eye(2), Xc.T @ (y - y.mean()))
    np.testing.assert_allclose(m.coef, w)
    assert m.intercept == pytest.approx(y.mean() - X.mean(axis=0) @ w)
