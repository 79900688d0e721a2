"""Year-class target encoding for tree models."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, clone
from sklearn.utils.validation import check_is_fitted


class YearLabelRegressor(RegressorMixin, BaseEstimator):
    """Fit ``estimator`` on floor(age) class indices and map back to years.

    Classes are the sorted distinct whole years in the training targets.
    The wrapped model regresses the class index; predictions are decoded by
    the least-squares line from class index to class-mean age. Being affine,
    the decoder keeps additive attributions of the inner model additive in
    years (scale by ``slope_``).
    """

    def __init__(self, estimator=None):
        self.estimator = estimator

    def fit(self, X, y):
        y = np.asarray(y, dtype=np.float64)
        years = np.floor(y)
        self.classes_ = np.unique(years)
        codes = np.searchsorted(self.classes_, years).astype(np.float64)
        means = np.array([y[years == c].mean() for c in self.classes_])
        if len(self.classes_) == 1:
            self.slope_, self.intercept_ = 0.0, float(means[0])
        else:
            k = np.arange(len(self.classes_), dtype=np.float64)
            self.slope_, self.intercept_ = (float(v) for v in np.polyfit(k, means, 1))
        self.class_means_ = means
        self.estimator_ = clone(self.estimator).fit(X, codes)
        self.n_features_in_ = self.estimator_.n_features_in_
        return self

    def decode(self, codes):
        return self.intercept_ + self.slope_ * np.asarray(codes)

    def predict(self, X):
        check_is_fitted(self, "estimator_")
        return self.decode(self.estimator_.predict(X))

    @property
    def converged(self) -> bool:
        return bool(getattr(self.estimator_, "converged", True))

    def get_state(self) -> dict:
        return {k: getattr(self, k) for k in
                ("classes_", "class_means_", "slope_", "intercept_", "estimator_", "n_features_in_")}

    def set_state(self, state: dict):
        for k, v in state.items():
            setattr(self, k, v)
        return self
