"""Nearest-neighbour regressors."""
from __future__ import annotations

import numpy as np

from .._utils import derive_seed
from .base import BaseRegressor


def _sq_dist(A, B):
    d = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


def _k_smallest_mean(d, y_store, k):
    if k >= d.shape[1]:
        return np.broadcast_to(y_store.mean(), d.shape[0]).copy()
    nn = np.argpartition(d, k - 1, axis=1)[:, :k]
    return y_store[nn].mean(axis=1)


def knn_mean(X_store, y_store, X, k, chunk=4096):
    """Mean target of the k nearest stored rows."""
    k = min(k, len(y_store))
    out = np.empty(X.shape[0])
    for s in range(0, X.shape[0], chunk):
        out[s:s + chunk] = _k_smallest_mean(_sq_dist(X[s:s + chunk], X_store), y_store, k)
    return out


class KNNRegressor(BaseRegressor):
    """Unweighted mean of the k Euclidean-nearest training targets."""

    _fitted_attrs = ("X_fit_", "y_fit_")

    def __init__(self, n_neighbors: int = 5):
        self.n_neighbors = n_neighbors

    def _fit(self, X, y):
        if self.n_neighbors < 1:
            raise ValueError("n_neighbors must be >= 1")
        self.X_fit_ = X.copy()
        self.y_fit_ = y.copy()

    def _predict(self, X):
        return knn_mean(self.X_fit_, self.y_fit_, X, int(self.n_neighbors))


class BaggedKNNRegressor(BaseRegressor):
    """Average of KNN regressors fitted on bootstrap replicas.

    Parameters
    ----------
    n_neighbors : k for every replica (capped at the replica size)
    n_estimators : number of replicas
    max_samples : replica size as a fraction of the training set
    random_state : seed for the bootstrap draws
    """

    _fitted_attrs = ("X_fit_", "y_fit_", "replicas_")

    def __init__(self, n_neighbors: int = 5, n_estimators: int = 10, max_samples: float = 1.0, random_state: int = 0):
        self.n_neighbors = n_neighbors
        self.n_estimators = n_estimators
        self.max_samples = max_samples
        self.random_state = random_state

    def _fit(self, X, y):
        n = len(y)
        m = max(1, int(round(self.max_samples * n)))
        rng = np.random.default_rng(derive_seed(self.random_state, "bagged-knn"))
        self.replicas_ = np.stack([rng.integers(0, n, size=m) for _ in range(int(self.n_estimators))])
        self.X_fit_ = X.copy()
        self.y_fit_ = y.copy()

    def _predict(self, X, chunk=4096):
        out = np.empty(X.shape[0])
        k = int(self.n_neighbors)
        for s in range(0, X.shape[0], chunk):
            d = _sq_dist(X[s:s + chunk], self.X_fit_)
            preds = [_k_smallest_mean(d[:, r], self.y_fit_[r], min(k, len(r))) for r in self.replicas_]
            out[s:s + chunk] = np.mean(preds, axis=0)
        return out
