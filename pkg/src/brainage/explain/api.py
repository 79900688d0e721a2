"""Explaining a trained model on a set of rows."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .._utils import derive_seed
from ..models.registry import get_family
from .shapley import FULL_KERNEL_ENUMERATION, ShapMatrix, kernel_shap_matrix, permutation_shap_matrix
from .trees import tree_shap


METHODS = ("auto", "tree", "tree_path", "kernel", "permutation")


def default_method(family: str, n_features: int | None = None) -> str:
    """Exact tree algorithm for tree families; otherwise the kernel estimator
    while its coalitions can be enumerated, and sampled orderings beyond."""
    if get_family(family).tree:
        return "tree"
    if n_features is not None and n_features > FULL_KERNEL_ENUMERATION:
        return "permutation"
    return "kernel"


def explain_model(model, X: np.ndarray, background: np.ndarray, sample_ids: Sequence[str] | None = None,
                  ages: np.ndarray | None = None, method: str = "auto", n_coalitions: int | None = None,
                  seed: int = 0, n_permutations: int = 2) -> ShapMatrix:
    """SHAP matrix for ``model`` (a TrainedModel) on raw feature rows.

    ``method="auto"`` uses the exact tree algorithm for tree families, the
    kernel estimator when all coalitions can be enumerated and antithetic
    permutation sampling (``n_permutations`` orderings) otherwise. Both impute absent features from the
    same background rows, so their base values are comparable.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    background = np.atleast_2d(np.asarray(background, dtype=np.float64))
    method = default_method(model.family, X.shape[1]) if method == "auto" else method
    ids = list(sample_ids) if sample_ids is not None else [str(i) for i in range(len(X))]
    preds = model.predict(X)
    used = None
    if method == "tree":
        phi, base = tree_shap(model, X, background, "interventional")
    elif method == "tree_path":
        phi, base = tree_shap(model, X, method="path_dependent")
    elif method in ("kernel", "permutation"):
        # z-scoring acts elementwise, so it commutes with building hybrid rows
        # and the attributions can be computed in the estimator's input space
        est = model.estimator
        fast = getattr(est, "predict_unchecked", est.predict)
        bg, Xt = model.transform(background), model.transform(X)
        if method == "kernel":
            phi, base, used = kernel_shap_matrix(fast, bg, Xt, n_coalitions, derive_seed(seed, "kernel", model.family))
        else:
            phi, base, used = permutation_shap_matrix(fast, bg, Xt, n_permutations,
                                                      derive_seed(seed, "permutation", model.family))
    else:
        raise ValueError(f"unknown explanation method {method!r}")
    return ShapMatrix(
        model=model.family, sample_ids=ids, columns=list(model.columns), values=phi, base_value=float(base),
        method=method, n_coalitions=used, seed=int(seed), ages=None if ages is None else np.asarray(ages),
        predictions=preds, metadata={"n_background": int(len(background)),
                  **({"n_permutations": int(n_permutations)} if method == "permutation" else {})},
    )


def best_fold_split(folds: Sequence[int], fold_mae: Sequence[float]) -> tuple[np.ndarray, np.ndarray, int]:
    """(train rows, held-out rows, fold) for the fold with the lowest MAE;
    ties go to the lower fold index."""
    folds = np.asarray(folds)
    best = int(np.argmin(np.asarray(fold_mae)))
    return np.flatnonzero(folds != best), np.flatnonzero(folds == best), best
