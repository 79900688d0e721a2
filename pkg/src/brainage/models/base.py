"""Shared estimator plumbing: validation and JSON state encoding."""
from __future__ import annotations

import warnings
from typing import Any

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y


class SchemaError(ValueError):
    """Input columns do not match what the model was trained on."""


class ConvergenceWarning(UserWarning):
    pass


def encode_state(obj: Any) -> Any:
    """Recursively turn fitted attributes into JSON-compatible values."""
    from .tree import TreeArrays

    if isinstance(obj, np.ndarray):
        return {"__ndarray__": obj.ravel().tolist(), "dtype": obj.dtype.str, "shape": list(obj.shape)}
    if isinstance(obj, TreeArrays):
        return {"__tree__": encode_state(obj.to_dict())}
    if isinstance(obj, BaseEstimator):
        fitted = hasattr(obj, "n_features_in_")
        return {"__estimator__": type(obj).__name__, "params": encode_state(_plain_params(obj)),
                "state": encode_state(obj.get_state()) if fitted else None}
    if isinstance(obj, dict):
        return {str(k): encode_state(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [encode_state(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def decode_state(obj: Any) -> Any:
    from .registry import ESTIMATOR_CLASSES
    from .tree import TreeArrays

    if isinstance(obj, dict):
        if "__ndarray__" in obj:
            return np.asarray(obj["__ndarray__"], dtype=np.dtype(obj["dtype"])).reshape(obj["shape"])
        if "__tree__" in obj:
            return TreeArrays.from_dict(decode_state(obj["__tree__"]))
        if "__estimator__" in obj:
            cls = ESTIMATOR_CLASSES[obj["__estimator__"]]
            params = decode_state(obj["params"])
            est = cls(**params)
            if obj["state"] is not None:
                est.set_state(decode_state(obj["state"]))
            return est
        return {k: decode_state(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [decode_state(v) for v in obj]
    return obj


def _plain_params(est: BaseEstimator) -> dict:
    params = est.get_params(deep=False)
    out = {}
    for k, v in params.items():
        out[k] = list(v) if isinstance(v, tuple) else v
    return out


class BaseRegressor(RegressorMixin, BaseEstimator):
    """fit/predict skeleton with input checks and state round-tripping.

    Subclasses list their fitted attributes in ``_fitted_attrs`` and
    implement ``_fit`` / ``_predict``.
    """

    _fitted_attrs: tuple[str, ...] = ()

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        if X.shape[0] < 2:
            raise ValueError("need at least two samples to fit")
        self.n_features_in_ = X.shape[1]
        self._fit(X, y)
        return self

    def predict(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise SchemaError(f"model expects {self.n_features_in_} features, got {X.shape[1]}")
        return self._predict(X)

    def predict_unchecked(self, X: np.ndarray) -> np.ndarray:
        """``predict`` without input validation, for trusted float64 arrays
        produced internally (e.g. many perturbed copies of a checked row)."""
        return self._predict(X)

    @property
    def converged(self) -> bool:
        return bool(getattr(self, "converged_", True))

    def get_state(self) -> dict:
        check_is_fitted(self, "n_features_in_")
        state = {"n_features_in_": self.n_features_in_}
        for name in self._fitted_attrs:
            state[name] = getattr(self, name)
        return state

    def set_state(self, state: dict) -> "BaseRegressor":
        for name, value in state.items():
            setattr(self, name, value)
        return self


def warn_not_converged(name: str, detail: str) -> None:
    warnings.warn(f"{name} did not converge: {detail}", ConvergenceWarning, stacklevel=3)
