"""Shapley attributions and grouped importance."""
from .api import METHODS, best_fold_split, default_method, explain_model
from .groups import (
    KINDS,
    GroupImportance,
    Grouping,
    feature_importance,
    group_importance,
    signed_feature_trend,
)
from .shapley import (
    CoalitionDesign,
    RidgeDampingWarning,
    ShapError,
    ShapMatrix,
    coalition_design,
    exact_shap_enumeration,
    kernel_shap,
    kernel_shap_matrix,
    linear_shap,
    permutation_shap,
    permutation_shap_matrix,
    sample_background,
)
from .trees import (
    NotATreeModel,
    ensemble_parts,
    interventional_tree_shap,
    path_dependent_tree_shap,
    tree_conditional_value,
    tree_shap,
)

__all__ = [
    "METHODS", "CoalitionDesign", "GroupImportance", "Grouping", "KINDS", "NotATreeModel", "RidgeDampingWarning",
    "ShapError", "ShapMatrix", "best_fold_split", "coalition_design", "default_method", "ensemble_parts",
    "exact_shap_enumeration", "explain_model", "feature_importance", "group_importance",
    "interventional_tree_shap", "kernel_shap", "kernel_shap_matrix", "linear_shap",
    "path_dependent_tree_shap", "permutation_shap", "permutation_shap_matrix", "sample_background", "signed_feature_trend", "tree_conditional_value",
    "tree_shap",
]
