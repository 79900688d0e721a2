"""Tree ensembles: random forest, second-order boosting and ordered boosting."""
from __future__ import annotations

import numpy as np

from .._utils import rng_for
from .base import BaseRegressor
from .tree import (
    TreeArrays,
    bin_features,
    build_cart,
    build_second_order,
    oblivious_leaf_index,
    oblivious_structure,
    oblivious_to_arrays,
    presort,
    quantile_borders,
)


class TreeEnsembleMixin:
    """Shared prediction for models stored as ``base_score_ + sum(trees)``
    (or their mean when ``average_`` is set)."""

    trees_: list[TreeArrays]
    base_score_: float
    average_: bool = False

    def _predict(self, X):
        if not self.trees_:
            return np.full(X.shape[0], self.base_score_)
        out = np.zeros(X.shape[0])
        for t in self.trees_:
            out += t.predict(X)
        if self.average_:
            out /= len(self.trees_)
        return out + self.base_score_


def _n_features(spec, p: int) -> int:
    if spec is None:
        return p
    if spec == "sqrt":
        return max(1, int(np.sqrt(p)))
    if isinstance(spec, float):
        return max(1, int(spec * p))
    return max(1, min(p, int(spec)))


class RandomForestRegressor(TreeEnsembleMixin, BaseRegressor):
    """Bootstrap-aggregated CART trees with per-split feature subsampling."""

    _fitted_attrs = ("trees_", "base_score_", "average_")

    def __init__(self, n_estimators: int = 100, max_features="sqrt", max_depth: int | None = None,
                 min_samples_leaf: int = 1, bootstrap: bool = True, random_state: int = 0):
        self.n_estimators = n_estimators
        self.max_features = max_features
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.bootstrap = bootstrap
        self.random_state = random_state

    def _fit(self, X, y):
        n, p = X.shape
        m = _n_features(self.max_features, p)
        self.trees_ = []
        for t in range(int(self.n_estimators)):
            rng = rng_for(self.random_state, "forest", t)
            rows = rng.integers(0, n, size=n) if self.bootstrap else np.arange(n)
            self.trees_.append(build_cart(X[rows], y[rows], rng, m, self.max_depth, int(self.min_samples_leaf)))
        self.base_score_ = 0.0
        self.average_ = True


class GBDTRegressor(TreeEnsembleMixin, BaseRegressor):
    """Gradient boosting on squared loss with Newton leaf values.

    Leaves minimize the second-order expansion plus ``reg_lambda`` (L2) and
    ``reg_alpha`` (L1) penalties on the leaf weight; ``gamma`` is the
    minimum gain for a split.
    """

    _fitted_attrs = ("trees_", "base_score_")

    def __init__(self, n_estimators: int = 200, learning_rate: float = 0.05, max_depth: int = 3,
                 reg_lambda: float = 1.0, reg_alpha: float = 0.0, gamma: float = 0.0,
                 min_child_weight: float = 1.0, subsample: float = 1.0, colsample_bytree: float = 1.0,
                 random_state: int = 0):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.reg_lambda = reg_lambda
        self.reg_alpha = reg_alpha
        self.gamma = gamma
        self.min_child_weight = min_child_weight
        self.subsample = subsample
        self.colsample_bytree = colsample_bytree
        self.random_state = random_state

    def _fit(self, X, y):
        n, p = X.shape
        self.base_score_ = float(y.mean())
        F = np.full(n, self.base_score_)
        n_cols = _n_features(float(self.colsample_bytree), p)
        n_rows = max(2, int(round(self.subsample * n)))
        order = presort(X)
        self.trees_ = []
        for t in range(int(self.n_estimators)):
            rng = rng_for(self.random_state, "gbdt", t)
            rows = np.sort(rng.choice(n, n_rows, replace=False)) if n_rows < n else np.arange(n)
            cols = np.sort(rng.choice(p, n_cols, replace=False)) if n_cols < p else np.arange(p)
            g = F[rows] - y[rows]
            tree = build_second_order(
                X, g, np.ones(len(rows)), cols, int(self.max_depth), float(self.reg_lambda),
                float(self.reg_alpha), float(self.gamma), float(self.min_child_weight), float(self.learning_rate),
                order=order, rows=rows,
            )
            self.trees_.append(tree)
            F += tree.predict(X)


class OrderedGBDTRegressor(TreeEnsembleMixin, BaseRegressor):
    """Boosting with oblivious trees and ordered residuals.

    One seeded permutation fixes an order over training rows. The residual
    used for row i when growing each tree comes from a companion model whose
    leaf values were estimated only from rows that precede i, which removes
    the target leakage of ordinary boosting. The exported model uses leaf
    values estimated from all rows.
    """

    _fitted_attrs = ("trees_", "base_score_")

    def __init__(self, n_estimators: int = 200, learning_rate: float = 0.05, depth: int = 4,
                 l2_leaf_reg: float = 3.0, border_count: int = 32, colsample: float = 1.0, random_state: int = 0):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.depth = depth
        self.l2_leaf_reg = l2_leaf_reg
        self.border_count = border_count
        self.colsample = colsample
        self.random_state = random_state

    def _fit(self, X, y):
        n, p = X.shape
        lam, lr = float(self.l2_leaf_reg), float(self.learning_rate)
        borders = quantile_borders(X, int(self.border_count))
        n_borders = np.array([len(b) for b in borders])
        Xb = bin_features(X, borders)
        splittable = np.flatnonzero(n_borders > 0)
        perm = rng_for(self.random_state, "ordered-permutation").permutation(n)
        pos = np.empty(n, dtype=np.int64)
        pos[perm] = np.arange(n)

        self.base_score_ = float(y.mean())
        self.trees_ = []
        F_ord = np.full(n, self.base_score_)
        if len(splittable) == 0:
            return
        n_cols = _n_features(float(self.colsample), len(splittable))
        for t in range(int(self.n_estimators)):
            rng = rng_for(self.random_state, "ordered", t)
            feats = np.sort(rng.choice(splittable, n_cols, replace=False)) if n_cols < len(splittable) else splittable
            g = F_ord - y
            splits = oblivious_structure(Xb, g, n_borders, int(self.depth), lam, feats)
            if not splits:
                break
            leaf = oblivious_leaf_index(Xb, splits)
            n_leaves = 1 << len(splits)
            G = np.bincount(leaf, weights=g, minlength=n_leaves)
            H = np.bincount(leaf, minlength=n_leaves).astype(np.float64)
            values = -lr * G / (H + lam)
            self.trees_.append(oblivious_to_arrays(splits, borders, values, H))

            # prefix sums within each leaf in permutation order
            order = np.lexsort((pos, leaf))
            gs, ls = g[order], leaf[order]
            cg = np.cumsum(gs) - gs
            ch = np.arange(n, dtype=np.float64)
            start = np.r_[0, np.flatnonzero(np.diff(ls)) + 1]
            first = np.repeat(start, np.diff(np.r_[start, n]))
            prev_g = cg - cg[first]
            prev_h = ch - ch[first]
            upd = np.empty(n)
            upd[order] = -lr * prev_g / (prev_h + lam)
            F_ord += upd
