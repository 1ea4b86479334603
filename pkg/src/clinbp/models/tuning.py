"""Hyperparameter search: exhaustive grid, or Bayesian optimisation with a
Gaussian-process surrogate and expected improvement."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.linalg import cho_factor, cho_solve
from scipy.stats import norm

from ..parallel import parallel_map

log = logging.getLogger(__name__)

JITTER = 1e-6
XI = 0.01
N_INITIAL = 5
N_CANDIDATES = 2000


@dataclass(frozen=True)
class Dimension:
    name: str
    low: float
    high: float
    integer: bool = False
    log: bool = False

    def __post_init__(self):
        if not self.low <= self.high:
            raise ValueError(f"{self.name}: low > high")
        if self.log and self.low <= 0:
            raise ValueError(f"{self.name}: log scale needs a positive range")

    def to_unit(self, v: float) -> float:
        lo, hi, v = (math.log(self.low), math.log(self.high), math.log(v)) if self.log else (self.low, self.high, v)
        return 0.0 if hi == lo else (v - lo) / (hi - lo)

    def from_unit(self, u: float):
        lo, hi = (math.log(self.low), math.log(self.high)) if self.log else (self.low, self.high)
        v = lo + float(np.clip(u, 0, 1)) * (hi - lo)
        v = math.exp(v) if self.log else v
        return int(round(v)) if self.integer else v

    def lattice(self, n: int) -> list:
        vals = [self.from_unit(u) for u in np.linspace(0, 1, n)]
        return list(dict.fromkeys(vals))


@dataclass
class SearchResult:
    best_params: dict
    best_value: float
    history: list = field(default_factory=list)  # (params, value) in evaluation order

    def to_dict(self) -> dict:
        return {
            "best_params": self.best_params,
            "best_value": self.best_value,
            "history": [{"params": p, "value": None if not math.isfinite(v) else v} for p, v in self.history],
        }


def _safe_eval(objective, params) -> float:
    try:
        v = float(objective(params))
    except Exception as exc:  # a failed point must not end the search
        log.warning("objective failed at %s: %s", params, exc)
        return math.inf
    return v if math.isfinite(v) else math.inf


# ---------------------------------------------------------------------------
# Gaussian process


def _rbf(A, B, ls):
    d = (A[:, None, :] - B[None, :, :]) / ls
    return np.exp(-0.5 * np.sum(d * d, axis=-1))


@dataclass
class GaussianProcess:
    """Zero-mean GP on standardised targets, unit signal variance, RBF kernel
    with one length-scale per input dimension, fixed 1e-6 noise jitter."""

    length_scales: np.ndarray
    X: np.ndarray
    y_mean: float
    y_std: float
    chol: tuple
    weights: np.ndarray

    @classmethod
    def fit(cls, X, y) -> "GaussianProcess":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        mu, sd = float(y.mean()), float(y.std())
        sd = sd if sd > 0 else 1.0
        z = (y - mu) / sd
        d = X.shape[1]

        def nll(log_ls):
            K = _rbf(X, X, np.exp(log_ls)) + JITTER * np.eye(len(X))
            try:
                c = cho_factor(K, lower=True)
            except np.linalg.LinAlgError:
                return 1e10
            a = cho_solve(c, z)
            return 0.5 * z @ a + np.sum(np.log(np.diag(c[0])))

        res = optimize.minimize(nll, np.full(d, math.log(0.3)), method="L-BFGS-B",
                                bounds=[(math.log(1e-2), math.log(10.0))] * d)
        ls = np.exp(res.x)
        K = _rbf(X, X, ls) + JITTER * np.eye(len(X))
        c = cho_factor(K, lower=True)
        return cls(ls, X, mu, sd, c, cho_solve(c, z))

    def predict(self, Xs):
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        Ks = _rbf(Xs, self.X, self.length_scales)
        mu = Ks @ self.weights
        v = cho_solve(self.chol, Ks.T)
        var = np.maximum(1.0 - np.sum(Ks * v.T, axis=1), 0.0)
        return self.y_mean + self.y_std * mu, self.y_std * np.sqrt(var)


def expected_improvement(mu, sigma, best: float, xi: float = XI) -> np.ndarray:
    """EI for minimisation: E[max(best - f - xi, 0)]; zero where sigma == 0."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    imp = best - mu - xi
    out = np.zeros_like(mu)
    pos = sigma > 1e-12
    z = imp[pos] / sigma[pos]
    out[pos] = imp[pos] * norm.cdf(z) + sigma[pos] * norm.pdf(z)
    return out


# ---------------------------------------------------------------------------
# search drivers


def grid_search(objective, space, points_per_dim: int = 3, threads: int = 1) -> SearchResult:
    dims = list(space)
    combos = [dict(zip([d.name for d in dims], vals))
              for vals in itertools.product(*[d.lattice(points_per_dim) for d in dims])]
    values = parallel_map(lambda p: _safe_eval(objective, p), combos, threads)
    history = list(zip(combos, values))
    i = int(np.argmin(values))
    return SearchResult(combos[i], values[i], history)


def bayes_search(objective, space, budget: int = 30, seed: int = 0) -> SearchResult:
    dims = list(space)
    rng = np.random.default_rng(seed)
    U, values, history = [], [], []

    def evaluate(u):
        params = {d.name: d.from_unit(x) for d, x in zip(dims, u)}
        # snap integer dimensions back so the GP sees the evaluated point
        u = np.array([d.to_unit(params[d.name]) for d in dims])
        v = _safe_eval(objective, params)
        U.append(u)
        values.append(v)
        history.append((params, v))

    for _ in range(min(N_INITIAL, budget)):
        evaluate(rng.random(len(dims)))
    while len(values) < budget:
        finite = np.isfinite(values)
        if finite.sum() < 2:
            evaluate(rng.random(len(dims)))
            continue
        X = np.array(U)[finite]
        y = np.array(values)[finite]
        gp = GaussianProcess.fit(X, y)
        cand = rng.random((N_CANDIDATES, len(dims)))
        mu, sd = gp.predict(cand)
        ei = expected_improvement(mu, sd, float(y.min()))
        evaluate(cand[int(np.argmax(ei))])
    i = int(np.argmin(values))
    return SearchResult(history[i][0], values[i], history)


def tune_hyperparameters(objective, space, method: str = "bayes", budget: int = 30, seed: int = 0,
                         threads: int = 1) -> SearchResult:
    """Minimise ``objective(params_dict)`` over ``space`` (a list of
    :class:`Dimension`). Failed evaluations count as +inf."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if method == "grid":
        return grid_search(objective, space, threads=threads)
    if method == "bayes":
        return bayes_search(objective, space, budget, seed)
    raise ValueError(f"unknown tuning method {method!r}")


def tree_search_space() -> list[Dimension]:
    from .params import SEARCH_BOUNDS

    return [
        Dimension("max_depth", *SEARCH_BOUNDS["max_depth"], integer=True),
        Dimension("n_estimators", *SEARCH_BOUNDS["n_estimators"], integer=True),
        Dimension("learning_rate", *SEARCH_BOUNDS["learning_rate"], log=True),
    ]
