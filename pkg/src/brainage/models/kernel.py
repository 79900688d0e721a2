"""RBF kernel ridge regression and epsilon-insensitive support vector regression."""
from __future__ import annotations

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .base import BaseRegressor, warn_not_converged


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    """``exp(-gamma * ||a - b||^2)`` for every row pair."""
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * A @ B.T
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


def _gamma(gamma, n_features):
    if gamma is None or gamma == "scale":
        return 1.0 / max(n_features, 1)
    return float(gamma)


class KernelRidge(BaseRegressor):
    """Ridge regression in an RBF feature space.

    The target is centred, then ``(K + alpha I) a = y`` is solved by Cholesky
    with one step of iterative refinement.

    Parameters
    ----------
    alpha : ridge strength
    gamma : RBF width; ``None`` means ``1 / n_features``
    """

    _fitted_attrs = ("dual_coef_", "X_fit_", "y_mean_", "gamma_", "residual_")

    def __init__(self, alpha: float = 1.0, gamma: float | None = None):
        self.alpha = alpha
        self.gamma = gamma

    def _fit(self, X, y):
        self.gamma_ = _gamma(self.gamma, X.shape[1])
        K = rbf_kernel(X, X, self.gamma_)
        A = K + self.alpha * np.eye(len(y))
        self.y_mean_ = float(y.mean())
        yc = y - self.y_mean_
        try:
            fac = cho_factor(A, lower=True)
            a = cho_solve(fac, yc)
            a += cho_solve(fac, yc - A @ a)
        except LinAlgError:
            a = np.linalg.lstsq(A, yc, rcond=None)[0]
        self.dual_coef_ = a
        self.X_fit_ = X.copy()
        self.residual_ = float(np.max(np.abs(A @ a - yc)))

    def _predict(self, X):
        return rbf_kernel(X, self.X_fit_, self.gamma_) @ self.dual_coef_ + self.y_mean_


def smo_svr(K: np.ndarray, y: np.ndarray, C: float, epsilon: float, tol: float = 1e-3, max_iter: int = 100000):
    """Solve the epsilon-SVR dual with pairwise (SMO) updates.

    The 2n dual variables are ``a`` (first n, sign +1) and ``a*`` (last n,
    sign -1). Working pairs are chosen by maximal violation for the first
    index and second-order gain for the second.

    Returns
    -------
    coef : a - a*, length n
    rho : offset, decision = K @ coef - rho
    gap : final maximal KKT violation
    converged : bool
    """
    n = len(y)
    s = np.r_[np.ones(n), -np.ones(n)]
    idx = np.r_[np.arange(n), np.arange(n)]
    Kx = K[np.ix_(idx, idx)]
    Q = s[:, None] * s[None, :] * Kx
    kd = np.diag(Kx)
    a = np.zeros(2 * n)
    G = np.r_[epsilon - y, epsilon + y]
    gap = np.inf
    converged = False
    for _ in range(max_iter):
        up = ((s > 0) & (a < C)) | ((s < 0) & (a > 0))
        low = ((s > 0) & (a > 0)) | ((s < 0) & (a < C))
        mG = -s * G
        if not up.any() or not low.any():
            gap = 0.0
            converged = True
            break
        up_vals = np.where(up, mG, -np.inf)
        i = int(np.argmax(up_vals))
        gmax = up_vals[i]
        gmin = np.min(np.where(low, mG, np.inf))
        gap = gmax - gmin
        if gap < tol:
            converged = True
            break
        b = gmax - mG
        quad = kd[i] + kd - 2.0 * Kx[i]
        quad = np.where(quad > 1e-12, quad, 1e-12)
        cand = low & (b > 0)
        j = int(np.argmax(np.where(cand, b * b / quad, -np.inf)))
        t = b[j] / quad[j]
        t = min(t, C - a[i] if s[i] > 0 else a[i], a[j] if s[j] > 0 else C - a[j])
        di, dj = s[i] * t, -s[j] * t
        a[i] += di
        a[j] += dj
        a[i] = min(max(a[i], 0.0), C)
        a[j] = min(max(a[j], 0.0), C)
        G += Q[:, i] * di + Q[:, j] * dj
    sG = s * G
    free = (a > 0) & (a < C)
    if free.any():
        rho = float(sG[free].mean())
    else:
        mG = -s * G
        up = ((s > 0) & (a < C)) | ((s < 0) & (a > 0))
        low = ((s > 0) & (a > 0)) | ((s < 0) & (a < C))
        hi = -np.max(mG[up]) if up.any() else 0.0
        lo = -np.min(mG[low]) if low.any() else 0.0
        rho = float((hi + lo) / 2.0)
    return a[:n] - a[n:], rho, float(gap), converged


class SVR(BaseRegressor):
    """Epsilon-insensitive regression with an RBF kernel.

    Parameters
    ----------
    C : box constraint
    epsilon : half-width of the insensitive tube, in target units
    gamma : RBF width; ``None`` means ``1 / n_features``
    tol : KKT tolerance
    """

    _fitted_attrs = ("dual_coef_", "support_vectors_", "intercept_", "gamma_", "kkt_gap_", "converged_")

    def __init__(self, C: float = 10.0, epsilon: float = 0.1, gamma: float | None = None,
                 tol: float = 1e-3, max_iter: int = 100000):
        self.C = C
        self.epsilon = epsilon
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter

    def _fit(self, X, y):
        self.gamma_ = _gamma(self.gamma, X.shape[1])
        K = rbf_kernel(X, X, self.gamma_)
        coef, rho, gap, ok = smo_svr(K, y, float(self.C), float(self.epsilon), float(self.tol), int(self.max_iter))
        sv = np.abs(coef) > 0
        self.dual_coef_ = coef[sv]
        self.support_vectors_ = X[sv].copy()
        self.intercept_ = -rho
        self.kkt_gap_ = gap
        self.converged_ = bool(ok)
        if not ok:
            warn_not_converged("SVR", f"KKT gap {gap:.3g}")

    def _predict(self, X):
        if len(self.dual_coef_) == 0:
            return np.full(X.shape[0], self.intercept_)
        return rbf_kernel(X, self.support_vectors_, self.gamma_) @ self.dual_coef_ + self.intercept_
