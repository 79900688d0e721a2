"""Model families, their hyperparameter schemas and estimator construction."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .ensemble import GBDTRegressor, OrderedGBDTRegressor, RandomForestRegressor
from .kernel import SVR, KernelRidge
from .linear import ElasticNet, Lasso
from .mlp import MLPRegressor
from .neighbors import BaggedKNNRegressor, KNNRegressor
from .target import YearLabelRegressor

ESTIMATOR_CLASSES = {
    cls.__name__: cls
    for cls in (ElasticNet, Lasso, KernelRidge, SVR, KNNRegressor, BaggedKNNRegressor,
                RandomForestRegressor, GBDTRegressor, OrderedGBDTRegressor, MLPRegressor, YearLabelRegressor)
}


# ---------------------------------------------------------------------------
# search-space primitives

@dataclass(frozen=True)
class LogUniform:
    low: float
    high: float

    def __post_init__(self):
        if not 0 < self.low <= self.high:
            raise ValueError("log-uniform range must satisfy 0 < low <= high")

    def sample(self, rng):
        return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def __post_init__(self):
        if not self.low <= self.high:
            raise ValueError("uniform range must satisfy low <= high")

    def sample(self, rng):
        return float(rng.uniform(self.low, self.high))


@dataclass(frozen=True)
class IntUniform:
    low: int
    high: int

    def __post_init__(self):
        if not self.low <= self.high:
            raise ValueError("integer range must satisfy low <= high")

    def sample(self, rng):
        return int(rng.integers(self.low, self.high + 1))


@dataclass(frozen=True)
class Choice:
    options: tuple

    def __post_init__(self):
        if not self.options:
            raise ValueError("choice needs at least one option")

    def sample(self, rng):
        return self.options[int(rng.integers(len(self.options)))]


@dataclass
class ModelFamily:
    """A named model family.

    ``schema`` maps hyperparameter names to search distributions. A name
    ending in ``_per_feature`` is divided by the number of input columns
    before it reaches the estimator (so ``gamma_per_feature=1`` gives
    ``gamma = 1/p``).
    """

    name: str
    factory: Callable[..., Any]
    schema: dict[str, Any]
    tree: bool = False
    defaults: dict[str, Any] = field(default_factory=dict)

    def sample(self, rng: np.random.Generator) -> dict:
        return {k: dist.sample(rng) for k, dist in sorted(self.schema.items())}

    def resolve(self, hyper: dict, n_features: int) -> dict:
        """Estimator keyword arguments for a hyperparameter point."""
        params = {**self.defaults, **hyper}
        out = {}
        for k, v in params.items():
            if k.endswith("_per_feature"):
                out[k[: -len("_per_feature")]] = float(v) / max(n_features, 1)
            else:
                out[k] = v
        unknown = set(out) - _init_names(self.factory)
        if unknown:
            raise ValueError(f"{self.name}: unknown hyperparameters {sorted(unknown)}")
        return out

    def build(self, hyper: dict, n_features: int, seed: int):
        params = self.resolve(hyper, n_features)
        if "random_state" in _init_names(self.factory):
            params.setdefault("random_state", int(seed))
        est = self.factory(**params)
        return YearLabelRegressor(est) if self.tree else est


def _init_names(factory) -> set[str]:
    return set(factory().get_params(deep=False))


# The MLP penalty and SVR C ranges sit high: tens of training rows against
# thousands of columns need strong shrinkage (MLP) and little slack (SVR).
FAMILIES: dict[str, ModelFamily] = {
    f.name: f
    for f in (
        ModelFamily("ElasticNet", ElasticNet, {"alpha": LogUniform(1e-3, 10.0), "l1_ratio": Uniform(0.05, 0.95)}),
        ModelFamily("Lasso", Lasso, {"alpha": LogUniform(1e-3, 10.0)}),
        ModelFamily("KernelRidge", KernelRidge,
                    {"alpha": LogUniform(1e-3, 10.0), "gamma_per_feature": LogUniform(0.05, 5.0)},
                    defaults={"gamma_per_feature": 1.0}),
        ModelFamily("GBDT", GBDTRegressor, {
            "n_estimators": IntUniform(50, 300), "learning_rate": LogUniform(0.01, 0.3),
            "max_depth": IntUniform(2, 6), "reg_lambda": LogUniform(0.01, 10.0),
            "reg_alpha": LogUniform(1e-3, 1.0), "subsample": Uniform(0.6, 1.0),
            "colsample_bytree": Uniform(0.2, 1.0),
        }, tree=True),
        ModelFamily("OrderedGBDT", OrderedGBDTRegressor, {
            "n_estimators": IntUniform(50, 300), "learning_rate": LogUniform(0.01, 0.3),
            "depth": IntUniform(3, 6), "l2_leaf_reg": LogUniform(1.0, 10.0), "colsample": Uniform(0.2, 1.0),
        }, tree=True),
        ModelFamily("RandomForest", RandomForestRegressor, {
            "n_estimators": Choice((50, 100, 200)), "max_depth": Choice((None, 4, 8, 16)),
            "min_samples_leaf": IntUniform(1, 5),
        }, tree=True),
        ModelFamily("BaggedKNN", BaggedKNNRegressor, {
            "n_neighbors": IntUniform(1, 20), "n_estimators": Choice((10, 20, 50)), "max_samples": Uniform(0.5, 1.0),
        }),
        ModelFamily("KNN", KNNRegressor, {"n_neighbors": IntUniform(1, 20)}),
        ModelFamily("SVR", SVR, {
            "C": LogUniform(1.0, 1000.0), "epsilon": LogUniform(0.01, 1.0), "gamma_per_feature": LogUniform(0.05, 5.0),
        }, defaults={"gamma_per_feature": 1.0}),
        ModelFamily("MLP", MLPRegressor, {"alpha": LogUniform(1.0, 100.0), "learning_rate_init": LogUniform(1e-4, 1e-2)}),
    )
}

FAMILY_NAMES: tuple[str, ...] = tuple(FAMILIES)


def get_family(name: str) -> ModelFamily:
    try:
        return FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown model family {name!r}; expected one of {FAMILY_NAMES}") from None
