"""Regression model families, cross-validation and hyperparameter search."""
from .base import ConvergenceWarning, SchemaError
from .ensemble import GBDTRegressor, OrderedGBDTRegressor, RandomForestRegressor
from .kernel import SVR, KernelRidge, rbf_kernel, smo_svr
from .linear import ElasticNet, Lasso, soft_threshold
from .mlp import MLPRegressor, gradient_check
from .neighbors import BaggedKNNRegressor, KNNRegressor
from .registry import FAMILIES, FAMILY_NAMES, Choice, IntUniform, LogUniform, ModelFamily, Uniform, get_family
from .selection import (
    CVResult,
    SearchResult,
    TrainedModel,
    cross_validate,
    fit_model,
    random_search,
    sample_points,
    stratified_kfold,
)
from .target import YearLabelRegressor
from .tree import TreeArrays

__all__ = [
    "BaggedKNNRegressor", "CVResult", "Choice", "ConvergenceWarning", "ElasticNet", "FAMILIES", "FAMILY_NAMES",
    "GBDTRegressor", "IntUniform", "KNNRegressor", "KernelRidge", "Lasso", "LogUniform", "MLPRegressor",
    "ModelFamily", "OrderedGBDTRegressor", "RandomForestRegressor", "SVR", "SchemaError", "SearchResult",
    "TrainedModel", "TreeArrays", "Uniform", "YearLabelRegressor", "cross_validate", "fit_model",
    "get_family", "gradient_check", "random_search", "rbf_kernel", "sample_points", "smo_svr",
    "soft_threshold", "stratified_kfold",
]
