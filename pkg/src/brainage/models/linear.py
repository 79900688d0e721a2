"""Elastic-net and lasso regression by cyclic coordinate descent."""
from __future__ import annotations

import numpy as np
from numba import njit

from .base import BaseRegressor, warn_not_converged


@njit(cache=True)
def _objective(r, w, l1, l2, n):
    return 0.5 * np.dot(r, r) / n + l1 * np.sum(np.abs(w)) + 0.5 * l2 * np.dot(w, w)


@njit(cache=True)
def _cd(XT, y, w, l1, l2, max_iter, tol):
    """Cyclic sweeps over the columns of a centred X, passed transposed.

    Returns (weights, objective after each sweep with the starting value
    first, converged flag).
    """
    p, n = XT.shape
    col_sq = np.empty(p)
    for j in range(p):
        col_sq[j] = np.dot(XT[j], XT[j]) / n
    r = y - XT.T @ w
    objs = np.empty(max_iter + 1)
    objs[0] = _objective(r, w, l1, l2, n)
    done = False
    it = 0
    while it < max_iter:
        max_dw = 0.0
        for j in range(p):
            if col_sq[j] == 0.0:
                continue
            wj = w[j]
            rho = np.dot(XT[j], r) / n + col_sq[j] * wj
            if rho > l1:
                new = (rho - l1) / (col_sq[j] + l2)
            elif rho < -l1:
                new = (rho + l1) / (col_sq[j] + l2)
            else:
                new = 0.0
            d = new - wj
            if d != 0.0:
                r -= d * XT[j]
                w[j] = new
                if abs(d) > max_dw:
                    max_dw = abs(d)
        it += 1
        objs[it] = _objective(r, w, l1, l2, n)
        if max_dw < tol:
            done = True
            break
    return w, objs[: it + 1], done


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


class ElasticNet(BaseRegressor):
    """Least squares with a mixed L1/L2 penalty.

    Minimizes ``0.5/n ||y - Xw - b||^2 + alpha * (l1_ratio ||w||_1
    + 0.5 (1 - l1_ratio) ||w||^2)``. The intercept is not penalized.

    Attributes
    ----------
    coef_, intercept_ : fitted parameters
    objective_history_ : objective before the first sweep and after each one
    converged_ : whether the largest coefficient update fell below ``tol``
    """

    _fitted_attrs = ("coef_", "intercept_", "n_iter_", "converged_", "objective_history_")

    def __init__(self, alpha: float = 1.0, l1_ratio: float = 0.5, max_iter: int = 10000, tol: float = 1e-6):
        self.alpha = alpha
        self.l1_ratio = l1_ratio
        self.max_iter = max_iter
        self.tol = tol

    def _fit(self, X, y):
        if self.alpha < 0 or not 0 <= self.l1_ratio <= 1:
            raise ValueError("alpha must be >= 0 and l1_ratio in [0, 1]")
        x_mean, y_mean = X.mean(axis=0), y.mean()
        XTc = np.ascontiguousarray((X - x_mean).T)
        w0 = np.zeros(X.shape[1])
        l1 = self.alpha * self.l1_ratio
        l2 = self.alpha * (1.0 - self.l1_ratio)
        w, objs, done = _cd(XTc, y - y_mean, w0, l1, l2, int(self.max_iter), float(self.tol))
        # each coordinate step is an exact minimization, so sweeps never go uphill
        slack = 1e-12 * max(1.0, abs(objs[0]))
        assert np.all(np.diff(objs) <= slack), "coordinate descent objective increased"
        self.coef_ = w
        self.intercept_ = float(y_mean - x_mean @ w)
        self.objective_history_ = objs
        self.n_iter_ = len(objs) - 1
        self.converged_ = bool(done)
        if not done:
            warn_not_converged(type(self).__name__, f"{self.n_iter_} sweeps")

    def _predict(self, X):
        return X @ self.coef_ + self.intercept_


class Lasso(ElasticNet):
    """Elastic net with a pure L1 penalty."""

    def __init__(self, alpha: float = 1.0, max_iter: int = 10000, tol: float = 1e-6):
        super().__init__(alpha=alpha, l1_ratio=1.0, max_iter=max_iter, tol=tol)
