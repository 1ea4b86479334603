"""Linear learners: ridge (stacking combiner) and L1-penalised quantile
regression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from ..errors import ConvergenceError


@dataclass
class LinearModel:
    intercept: float
    coef: np.ndarray

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return self.intercept + X @ self.coef

    def to_dict(self) -> dict:
        return {"intercept": self.intercept, "coef": np.asarray(self.coef).tolist()}

    @classmethod
    def from_dict(cls, d) -> "LinearModel":
        return cls(float(d["intercept"]), np.asarray(d["coef"], dtype=np.float64))


def fit_ridge(X, y, penalty: float = 1.0) -> LinearModel:
    """min ||y - b0 - X w||^2 + penalty ||w||^2 with an unpenalised intercept."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    mu = X.mean(axis=0)
    ybar = float(y.mean())
    Xc = X - mu
    G = Xc.T @ Xc + penalty * np.eye(X.shape[1])
    w = np.linalg.solve(G, Xc.T @ (y - ybar))
    return LinearModel(ybar - float(mu @ w), w)


def pinball_loss(y, pred, tau: float) -> float:
    """Sum of rho_tau(y - pred) with rho_tau(u) = u (tau - 1{u < 0})."""
    u = np.asarray(y, float) - np.asarray(pred, float)
    return float(np.sum(u * (tau - (u < 0))))


@dataclass
class QuantileModel(LinearModel):
    tau: float = 0.5
    l1_penalty: float = 0.0
    objective: float = float("nan")

    def to_dict(self) -> dict:
        d = super().to_dict()
        d.update(tau=self.tau, l1_penalty=self.l1_penalty, objective=self.objective)
        return d

    @classmethod
    def from_dict(cls, d) -> "QuantileModel":
        return cls(
            float(d["intercept"]), np.asarray(d["coef"], dtype=np.float64),
            float(d["tau"]), float(d["l1_penalty"]), float(d["objective"]),
        )


def quantile_objective(X, y, tau, l1_penalty, intercept, coef) -> float:
    X = np.asarray(X, float).reshape(len(y), -1)
    return pinball_loss(y, intercept + X @ coef, tau) + l1_penalty * float(np.sum(np.abs(coef)))


def fit_quantile(X, y, tau: float, l1_penalty: float = 0.1) -> QuantileModel:
    """Linear quantile regression minimising
    sum rho_tau(y - b0 - X b) + l1_penalty * ||b||_1 (intercept unpenalised),
    solved exactly as a linear program with HiGHS.
    """
    if not 0 < tau < 1:
        raise ValueError("tau must be in (0, 1)")
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    X = np.asarray(X, dtype=np.float64).reshape(n, -1)
    d = X.shape[1]
    # variables: [b0, b+ (d), b- (d), u+ (n), u- (n)]
    c = np.concatenate([[0.0], np.full(2 * d, l1_penalty), np.full(n, tau), np.full(n, 1.0 - tau)])
    Xs = sparse.csr_matrix(X)
    eye = sparse.identity(n, format="csr")
    A = sparse.hstack([sparse.csr_matrix(np.ones((n, 1))), Xs, -Xs, eye, -eye], format="csc")
    bounds = [(None, None)] + [(0, None)] * (2 * d + 2 * n)
    res = linprog(c, A_eq=A, b_eq=y, bounds=bounds, method="highs")
    if res.status != 0:
        raise ConvergenceError(
            f"quantile LP did not converge (status {res.status}): {res.message}",
            gap=getattr(res, "mip_gap", None),
        )
    b0 = float(res.x[0])
    coef = res.x[1 : 1 + d] - res.x[1 + d : 1 + 2 * d]
    return QuantileModel(b0, coef, tau, l1_penalty, quantile_objective(X, y, tau, l1_penalty, b0, coef))
