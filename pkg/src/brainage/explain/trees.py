"""Exact Shapley values for tree ensembles.

Two games are supported. The interventional game imputes absent features
from background rows, the same game the kernel estimator and the
enumeration oracle solve, and is the default. The path-dependent game
replaces the background with the training cover stored in each node.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from ..models.ensemble import TreeEnsembleMixin
from ..models.target import YearLabelRegressor
from ..models.tree import LEAF, TreeArrays


class NotATreeModel(TypeError):
    pass


def ensemble_parts(model) -> tuple[list[TreeArrays], float, float, float]:
    """(trees, scale, offset, base score) with
    ``prediction = offset + scale * (base_score + sum(tree(x)))``.

    Accepts a TrainedModel, a YearLabelRegressor or a bare ensemble.
    """
    est = getattr(model, "estimator", model)
    if isinstance(est, YearLabelRegressor):
        inner, slope, intercept = est.estimator_, est.slope_, est.intercept_
    else:
        inner, slope, intercept = est, 1.0, 0.0
    if not isinstance(inner, TreeEnsembleMixin):
        raise NotATreeModel(f"{type(inner).__name__} is not a tree ensemble")
    if getattr(model, "scaler", None) is not None:
        raise NotATreeModel("tree explanations expect unstandardized inputs")
    trees = list(inner.trees_)
    scale = slope / len(trees) if inner.average_ and trees else slope
    return trees, float(scale), float(intercept), float(slope * inner.base_score_)


# ---------------------------------------------------------------------------
# interventional

@njit(cache=True)
def _weight_tables(depth):
    wa = np.zeros((depth + 1, depth + 1))
    wb = np.zeros((depth + 1, depth + 1))
    for a in range(depth + 1):
        for b in range(depth + 1 - a):
            if a >= 1:
                wa[a, b] = math.exp(math.lgamma(a) + math.lgamma(b + 1) - math.lgamma(a + b + 1))
            if b >= 1:
                wb[a, b] = math.exp(math.lgamma(a + 1) + math.lgamma(b) - math.lgamma(a + b + 1))
    return wa, wb


@njit(cache=True)
def _interventional_tree(left, right, feature, threshold, value, X, B, wa, wb, phi):
    """Add one tree's attributions, averaged over background rows, to phi.

    For an explained row x and background row z the tree reaches a leaf
    exactly when features in A take x's side and features in B take z's
    side at every split where x and z disagree, so the leaf's Shapley share
    follows in closed form from |A| and |B|.
    """
    n_x, n_b = X.shape[0], B.shape[0]
    max_stack = 2 * len(left) + 2
    st_node = np.empty(max_stack, dtype=np.int64)
    st_len = np.empty(max_stack, dtype=np.int64)
    st_a = np.empty(max_stack, dtype=np.int64)
    st_b = np.empty(max_stack, dtype=np.int64)
    st_f = np.empty(max_stack, dtype=np.int64)
    st_s = np.empty(max_stack, dtype=np.int64)
    path_f = np.empty(len(left) + 1, dtype=np.int64)
    path_s = np.empty(len(left) + 1, dtype=np.int64)
    inv = 1.0 / n_b
    for i in range(n_x):
        for j in range(n_b):
            top = 0
            st_node[0] = 0
            st_len[0] = 0
            st_a[0] = 0
            st_b[0] = 0
            st_f[0] = -1
            st_s[0] = 0
            top = 1
            while top > 0:
                top -= 1
                node = st_node[top]
                plen = st_len[top]
                a = st_a[top]
                b = st_b[top]
                if st_f[top] >= 0:
                    path_f[plen - 1] = st_f[top]
                    path_s[plen - 1] = st_s[top]
                if left[node] == LEAF:
                    v = value[node] * inv
                    for k in range(plen):
                        if path_s[k] == 1:
                            phi[i, path_f[k]] += v * wa[a, b]
                        else:
                            phi[i, path_f[k]] -= v * wb[a, b]
                    continue
                f = feature[node]
                x_next = left[node] if X[i, f] <= threshold[node] else right[node]
                z_next = left[node] if B[j, f] <= threshold[node] else right[node]
                side = -1
                for k in range(plen):
                    if path_f[k] == f:
                        side = path_s[k]
                        break
                if side == 1 or x_next == z_next:
                    nxt = x_next
                elif side == 0:
                    nxt = z_next
                else:
                    st_node[top] = z_next
                    st_len[top] = plen + 1
                    st_a[top] = a
                    st_b[top] = b + 1
                    st_f[top] = f
                    st_s[top] = 0
                    top += 1
                    st_node[top] = x_next
                    st_len[top] = plen + 1
                    st_a[top] = a + 1
                    st_b[top] = b
                    st_f[top] = f
                    st_s[top] = 1
                    top += 1
                    continue
                st_node[top] = nxt
                st_len[top] = plen
                st_a[top] = a
                st_b[top] = b
                st_f[top] = -1
                st_s[top] = 0
                top += 1


def interventional_tree_shap(trees, X: np.ndarray, background: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """Exact interventional Shapley values of ``scale * sum(trees)``."""
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    B = np.ascontiguousarray(np.atleast_2d(background), dtype=np.float64)
    if B.shape[0] == 0:
        raise ValueError("background set is empty")
    phi = np.zeros(X.shape)
    depth = max((t.max_depth for t in trees), default=0)
    wa, wb = _weight_tables(depth)
    for t in trees:
        if t.n_nodes == 1:
            continue
        _interventional_tree(t.left, t.right, t.feature, t.threshold, t.value, X, B, wa, wb, phi)
    return phi * scale


# ---------------------------------------------------------------------------
# path-dependent

class _Path:
    __slots__ = ("d", "z", "o", "w")

    def __init__(self):
        self.d, self.z, self.o, self.w = [], [], [], []

    def copy(self):
        c = _Path()
        c.d, c.z, c.o, c.w = list(self.d), list(self.z), list(self.o), list(self.w)
        return c


def _extend(m: _Path, pz, po, pi) -> _Path:
    m = m.copy()
    depth = len(m.d)
    m.d.append(pi)
    m.z.append(pz)
    m.o.append(po)
    m.w.append(1.0 if depth == 0 else 0.0)
    for i in range(depth - 1, -1, -1):
        m.w[i + 1] += po * m.w[i] * (i + 1) / (depth + 1)
        m.w[i] = pz * m.w[i] * (depth - i) / (depth + 1)
    return m


def _unwound_weights(m: _Path, i: int) -> list[float]:
    depth = len(m.d) - 1
    n = m.w[depth]
    out = list(m.w[:depth])
    for j in range(depth - 1, -1, -1):
        if m.o[i] != 0:
            t = out[j]
            out[j] = n * (depth + 1) / ((j + 1) * m.o[i])
            n = t - out[j] * m.z[i] * (depth - j) / (depth + 1)
        else:
            out[j] = out[j] * (depth + 1) / (m.z[i] * (depth - j))
    return out


def _unwind(m: _Path, i: int) -> _Path:
    w = _unwound_weights(m, i)
    c = _Path()
    c.w = w
    c.d = m.d[:i] + m.d[i + 1:]
    c.z = m.z[:i] + m.z[i + 1:]
    c.o = m.o[:i] + m.o[i + 1:]
    return c


def _cover_ratio(tree: TreeArrays, child: int, parent: int) -> float:
    pc = tree.cover[parent]
    return tree.cover[child] / pc if pc > 0 else 0.5


def path_dependent_tree_shap_single(tree: TreeArrays, x: np.ndarray) -> np.ndarray:
    """Path-dependent exact Shapley values of one tree for one row."""
    phi = np.zeros(len(x))

    def recurse(j, m, pz, po, pi):
        m = _extend(m, pz, po, pi)
        if tree.left[j] == LEAF:
            for i in range(1, len(m.d)):
                w = sum(_unwound_weights(m, i))
                phi[m.d[i]] += w * (m.o[i] - m.z[i]) * tree.value[j]
            return
        f = tree.feature[j]
        hot, cold = (tree.left[j], tree.right[j]) if x[f] <= tree.threshold[j] else (tree.right[j], tree.left[j])
        iz = io = 1.0
        k = next((k for k in range(1, len(m.d)) if m.d[k] == f), None)
        if k is not None:
            iz, io = m.z[k], m.o[k]
            m = _unwind(m, k)
        # a branch with zero weight in both games contributes nothing
        hot_z = iz * _cover_ratio(tree, hot, j)
        if hot_z > 0 or io > 0:
            recurse(hot, m, hot_z, io, f)
        cold_z = iz * _cover_ratio(tree, cold, j)
        if cold_z > 0:
            recurse(cold, m, cold_z, 0.0, f)

    recurse(0, _Path(), 1.0, 1.0, -1)
    return phi


def expected_value(tree: TreeArrays) -> float:
    """Cover-weighted mean leaf value."""
    leaves = tree.left == LEAF
    cover = tree.cover[leaves]
    return float(np.sum(tree.value[leaves] * cover) / cover.sum()) if cover.sum() > 0 else float(tree.value[0])


def tree_conditional_value(tree: TreeArrays, x: np.ndarray, mask: np.ndarray) -> float:
    """Expected tree output when features in ``mask`` are fixed to x and the
    rest follow the training cover (the path-dependent game)."""
    def go(j):
        if tree.left[j] == LEAF:
            return tree.value[j]
        f = tree.feature[j]
        if mask[f]:
            return go(tree.left[j] if x[f] <= tree.threshold[j] else tree.right[j])
        l, r = tree.left[j], tree.right[j]
        return _cover_ratio(tree, l, j) * go(l) + _cover_ratio(tree, r, j) * go(r)

    return float(go(0))


def path_dependent_tree_shap(trees, X: np.ndarray, scale: float = 1.0) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    phi = np.zeros(X.shape)
    for t in trees:
        if t.n_nodes == 1:
            continue
        for i, x in enumerate(X):
            phi[i] += path_dependent_tree_shap_single(t, x)
    return phi * scale


# ---------------------------------------------------------------------------

def tree_shap(model, X: np.ndarray, background: np.ndarray | None = None,
              method: str = "interventional") -> tuple[np.ndarray, float]:
    """Exact Shapley values for a tree-ensemble model; returns (phi, base).

    With ``method="interventional"`` a background set is required and the
    base value is the mean prediction over it. With ``"path_dependent"``
    the base value is the cover-weighted expectation of the ensemble.
    """
    trees, scale, offset, base_score = ensemble_parts(model)
    if method == "interventional":
        if background is None:
            raise ValueError("interventional tree SHAP needs a background set")
        phi = interventional_tree_shap(trees, X, background, scale)
        base = float(np.mean(model.predict(np.atleast_2d(background))))
    elif method == "path_dependent":
        phi = path_dependent_tree_shap(trees, X, scale)
        base = offset + base_score + scale * sum(expected_value(t) for t in trees)
    else:
        raise ValueError(f"unknown tree SHAP method {method!r}")
    return phi, base
