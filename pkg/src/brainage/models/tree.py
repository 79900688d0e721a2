"""Array-backed regression trees and the split searches that grow them.

A tree is stored as parallel arrays indexed by node id. Leaves have
``left == -1``. Rows go left when ``x[feature] <= threshold``.

Thresholds are training values (the largest value sent left) rather than
midpoints, so which side any row lands on depends only on its rank among
the training values. Trees are therefore unchanged by strictly increasing
transforms of a feature.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

LEAF = -1


@dataclass
class TreeArrays:
    left: np.ndarray
    right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    value: np.ndarray
    cover: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    @property
    def max_depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for node in range(self.n_nodes):
            if self.left[node] != LEAF:
                depth[self.left[node]] = depth[node] + 1
                depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf id reached by every row."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.left[node] != LEAF
        while active.any():
            r = rows[active]
            nd = node[r]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active[r] = self.left[node[r]] != LEAF
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("left", "right", "feature", "threshold", "value", "cover")}

    @classmethod
    def from_dict(cls, d: dict) -> "TreeArrays":
        return cls(
            np.asarray(d["left"], dtype=np.int64), np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["feature"], dtype=np.int64), np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["value"], dtype=np.float64), np.asarray(d["cover"], dtype=np.float64),
        )


class _Builder:
    def __init__(self):
        self.left, self.right, self.feature, self.threshold, self.value, self.cover = [], [], [], [], [], []

    def add(self, value: float, cover: float) -> int:
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.feature.append(-1)
        self.threshold.append(np.nan)
        self.value.append(value)
        self.cover.append(cover)
        return len(self.left) - 1

    def split(self, node: int, feature: int, threshold: float, left: int, right: int) -> None:
        self.feature[node] = feature
        self.threshold[node] = threshold
        self.left[node] = left
        self.right[node] = right

    def finish(self) -> TreeArrays:
        return TreeArrays(
            np.array(self.left, dtype=np.int64), np.array(self.right, dtype=np.int64),
            np.array(self.feature, dtype=np.int64), np.array(self.threshold, dtype=np.float64),
            np.array(self.value, dtype=np.float64), np.array(self.cover, dtype=np.float64),
        )


def _sorted_columns(X: np.ndarray, idx: np.ndarray, feats: np.ndarray):
    sub = X[np.ix_(idx, feats)]
    order = np.argsort(sub, axis=0, kind="stable")
    xs = np.take_along_axis(sub, order, axis=0)
    return xs, order


def _best_split_sums(xs, order, stats, min_leaf, score_fn):
    """Evaluate every cut between distinct sorted values.

    ``stats`` is a list of per-row arrays whose prefix sums feed
    ``score_fn(left_sums, right_sums)``. Returns (score, column, row
    position) of the best cut, or None.
    """
    n = xs.shape[0]
    if n < 2 * min_leaf:
        return None
    left = [np.cumsum(s[order], axis=0)[:-1] for s in stats]
    total = [s.sum() for s in stats]
    right = [t - l for t, l in zip(total, left)]
    score = score_fn(left, right)
    valid = xs[:-1] < xs[1:]
    k = np.arange(1, n)[:, None]
    valid &= (k >= min_leaf) & (n - k >= min_leaf)
    score = np.where(valid, score, -np.inf)
    flat = int(np.argmax(score))
    pos, col = divmod(flat, xs.shape[1])
    if not np.isfinite(score[pos, col]):
        return None
    return float(score[pos, col]), col, pos


# ---------------------------------------------------------------------------
# CART (variance reduction)

def build_cart(
    X: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    max_features: int | None = None,
    max_depth: int | None = None,
    min_samples_leaf: int = 1,
    chunk: int = 64,
) -> TreeArrays:
    """Least-squares regression tree with per-split feature subsampling.

    At each node features are tried in a random order, ``max_features`` at
    a time; if none of them admits a cut the search continues with the
    next features so a splittable node is never left as a leaf.
    """
    n, p = X.shape
    m = p if max_features is None else max(1, min(p, int(max_features)))
    b = _Builder()
    root = b.add(float(y.mean()), float(n))
    stack = [(root, np.arange(n), 0)]

    def sse_gain(left, right):
        (sl,), (sr,) = left, right
        k = np.arange(1, len(sl) + 1, dtype=np.float64)[:, None]
        return sl * sl / k + sr * sr / (len(sl) + 1 - k)

    while stack:
        node, idx, depth = stack.pop()
        yy = y[idx]
        if len(idx) < 2 * min_samples_leaf or (max_depth is not None and depth >= max_depth):
            continue
        if np.all(yy == yy[0]):
            continue
        perm = rng.permutation(p)
        best = None
        start = 0
        while start < p:
            take = m if start == 0 else chunk
            feats = perm[start:start + take]
            start += take
            xs, order = _sorted_columns(X, idx, feats)
            found = _best_split_sums(xs, order, [yy], min_samples_leaf, sse_gain)
            if found is not None and (best is None or found[0] > best[0]):
                score, col, pos = found
                thr = float(xs[pos, col])
                best = (score, int(feats[col]), thr)
            if best is not None:
                break
        if best is None:
            continue
        _, f, thr = best
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        ln = b.add(float(y[li].mean()), float(len(li)))
        rn = b.add(float(y[ri].mean()), float(len(ri)))
        b.split(node, f, thr, ln, rn)
        stack.append((rn, ri, depth + 1))
        stack.append((ln, li, depth + 1))
    return b.finish()


# ---------------------------------------------------------------------------
# second-order (gradient/hessian) trees

def _soft(g, alpha):
    return np.sign(g) * np.maximum(np.abs(g) - alpha, 0.0)


def leaf_weight(G, H, reg_lambda, reg_alpha):
    return -_soft(G, reg_alpha) / (H + reg_lambda)


@njit(cache=True)
def _score(G, H, lam, alpha):
    if G > alpha:
        t = G - alpha
    elif G < -alpha:
        t = G + alpha
    else:
        return 0.0
    return t * t / (H + lam)


@njit(cache=True)
def _level_splits(XT, order, node_of, n_nodes, g, h, feats, lam, alpha, gamma, mcw):
    """Best cut for every open node of one level in a single presorted pass.

    ``XT`` is the transposed design matrix and ``order[f]`` lists rows
    sorted by feature f; rows with ``node_of < 0``
    are ignored. Returns per-node (gain, feature, threshold).
    """
    G = np.zeros(n_nodes)
    H = np.zeros(n_nodes)
    for i in range(len(g)):
        k = node_of[i]
        if k >= 0:
            G[k] += g[i]
            H[k] += h[i]
    parent = np.empty(n_nodes)
    for k in range(n_nodes):
        parent[k] = _score(G[k], H[k], lam, alpha)
    best_gain = np.zeros(n_nodes)
    best_feat = -np.ones(n_nodes, dtype=np.int64)
    best_thr = np.zeros(n_nodes)
    gl = np.empty(n_nodes)
    hl = np.empty(n_nodes)
    last = np.empty(n_nodes)
    seen = np.empty(n_nodes, dtype=np.bool_)
    for f in feats:
        gl[:] = 0.0
        hl[:] = 0.0
        seen[:] = False
        for i in order[f]:
            k = node_of[i]
            if k < 0:
                continue
            x = XT[f, i]
            if seen[k] and x > last[k]:
                hr = H[k] - hl[k]
                if hl[k] >= mcw and hr >= mcw:
                    gain = 0.5 * (_score(gl[k], hl[k], lam, alpha) + _score(G[k] - gl[k], hr, lam, alpha)
                                  - parent[k]) - gamma
                    if gain > best_gain[k]:
                        best_gain[k] = gain
                        best_feat[k] = f
                        best_thr[k] = last[k]
            gl[k] += g[i]
            hl[k] += h[i]
            last[k] = x
            seen[k] = True
    return best_gain, best_feat, best_thr, G, H


def presort(X: np.ndarray) -> np.ndarray:
    """Row order per feature, shape ``(n_features, n_rows)``."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)


def build_second_order(
    X: np.ndarray,
    grad: np.ndarray,
    hess: np.ndarray,
    features: np.ndarray,
    max_depth: int = 3,
    reg_lambda: float = 1.0,
    reg_alpha: float = 0.0,
    gamma: float = 0.0,
    min_child_weight: float = 1.0,
    learning_rate: float = 1.0,
    order: np.ndarray | None = None,
    rows: np.ndarray | None = None,
) -> TreeArrays:
    """Depth-limited tree grown level by level with the exact greedy
    regularized second-order gain.

    ``rows`` restricts training to a subset of X (row subsampling) and
    ``order`` may pass a cached :func:`presort` of X. Leaf values already
    include ``learning_rate``. Splits need strictly positive gain.
    """
    n = X.shape[0]
    order = presort(X) if order is None else order
    grad_full = np.zeros(n)
    hess_full = np.zeros(n)
    node_of = -np.ones(n, dtype=np.int64)
    rows = np.arange(n) if rows is None else np.asarray(rows)
    grad_full[rows] = grad
    hess_full[rows] = hess
    node_of[rows] = 0
    features = np.asarray(features, dtype=np.int64)
    XT = np.ascontiguousarray(X.T)

    b = _Builder()
    G0, H0 = float(grad_full.sum()), float(hess_full.sum())
    open_nodes = [b.add(float(learning_rate * leaf_weight(G0, H0, reg_lambda, reg_alpha)), H0)]
    for _ in range(max_depth):
        if not open_nodes:
            break
        gain, feat, thr, G, H = _level_splits(
            XT, order, node_of, len(open_nodes), grad_full, hess_full, features,
            float(reg_lambda), float(reg_alpha), float(gamma), float(min_child_weight),
        )
        next_nodes = []
        new_of = -np.ones(n, dtype=np.int64)
        for k, node in enumerate(open_nodes):
            if feat[k] < 0:
                continue
            members = node_of == k
            go_left = members & (X[:, feat[k]] <= thr[k])
            go_right = members & ~go_left
            kids = []
            for mask in (go_left, go_right):
                Gc, Hc = float(grad_full[mask].sum()), float(hess_full[mask].sum())
                kids.append(b.add(float(learning_rate * leaf_weight(Gc, Hc, reg_lambda, reg_alpha)), Hc))
                new_of[mask] = len(next_nodes)
                next_nodes.append(kids[-1])
            b.split(node, int(feat[k]), float(thr[k]), kids[0], kids[1])
        open_nodes, node_of = next_nodes, new_of
    return b.finish()


# ---------------------------------------------------------------------------
# oblivious trees on binned features

def quantile_borders(X: np.ndarray, border_count: int) -> list[np.ndarray]:
    """Candidate thresholds per feature: every distinct value but the
    largest, thinned to at most ``border_count`` by quantile."""
    out = []
    for col in X.T:
        u = np.unique(col)
        cuts = u[:-1]
        if len(cuts) > border_count:
            pick = np.unique(np.round(np.linspace(0, len(cuts) - 1, border_count)).astype(int))
            cuts = cuts[pick]
        out.append(cuts.astype(np.float64))
    return out


def bin_features(X: np.ndarray, borders: list[np.ndarray]) -> np.ndarray:
    """Bin index b means the value lies at or below border b and above b-1."""
    return np.column_stack([np.searchsorted(bd, X[:, j], side="left") for j, bd in enumerate(borders)]).astype(np.int64)


@njit(cache=True)
def _oblivious_level(Xb, leaf, n_leaves, grad, n_borders, feats, lam):
    """Best (feature, border) for one level of an oblivious tree."""
    nb = 0
    for f in feats:
        if n_borders[f] + 1 > nb:
            nb = n_borders[f] + 1
    Gh = np.zeros((n_leaves, nb))
    Hh = np.zeros((n_leaves, nb))
    Gt = np.zeros(n_leaves)
    Ht = np.zeros(n_leaves)
    for i in range(len(grad)):
        Gt[leaf[i]] += grad[i]
        Ht[leaf[i]] += 1.0
    gl = np.zeros(n_leaves)
    hl = np.zeros(n_leaves)
    best, best_f, best_b = -np.inf, -1, -1
    for f in feats:
        m = n_borders[f]
        if m == 0:
            continue
        Gh[:, : m + 1] = 0.0
        Hh[:, : m + 1] = 0.0
        for i in range(len(grad)):
            Gh[leaf[i], Xb[i, f]] += grad[i]
            Hh[leaf[i], Xb[i, f]] += 1.0
        gl[:] = 0.0
        hl[:] = 0.0
        for bi in range(m):
            score = 0.0
            for k in range(n_leaves):
                gl[k] += Gh[k, bi]
                hl[k] += Hh[k, bi]
                gr = Gt[k] - gl[k]
                score += gl[k] * gl[k] / (hl[k] + lam) + gr * gr / (Ht[k] - hl[k] + lam)
            if score > best:
                best, best_f, best_b = score, f, bi
    return best_f, best_b


def oblivious_structure(
    Xb: np.ndarray,
    grad: np.ndarray,
    n_borders: np.ndarray,
    depth: int,
    reg_lambda: float,
    features: np.ndarray,
) -> list[tuple[int, int]]:
    """Choose one (feature, border) per level maximizing the summed leaf score."""
    leaf = np.zeros(Xb.shape[0], dtype=np.int64)
    splits: list[tuple[int, int]] = []
    feats = np.asarray(features, dtype=np.int64)
    nbord = np.asarray(n_borders, dtype=np.int64)
    for level in range(depth):
        f, bi = _oblivious_level(Xb, leaf, 1 << level, grad, nbord, feats, float(reg_lambda))
        if f < 0:
            break
        splits.append((int(f), int(bi)))
        leaf = leaf * 2 + (Xb[:, f] > bi)
    return splits


def oblivious_leaf_index(Xb: np.ndarray, splits) -> np.ndarray:
    leaf = np.zeros(Xb.shape[0], dtype=np.int64)
    for f, bi in splits:
        leaf = leaf * 2 + (Xb[:, f] > bi)
    return leaf


def oblivious_to_arrays(splits, borders, leaf_values: np.ndarray, leaf_cover: np.ndarray) -> TreeArrays:
    """Expand an oblivious tree into the generic node-array form."""
    b = _Builder()
    depth = len(splits)

    def grow(level, code):
        if level == depth:
            return b.add(float(leaf_values[code]), float(leaf_cover[code]))
        node = b.add(0.0, 0.0)
        ln = grow(level + 1, code * 2)
        rn = grow(level + 1, code * 2 + 1)
        f, bi = splits[level]
        b.split(node, f, float(borders[f][bi]), ln, rn)
        b.cover[node] = b.cover[ln] + b.cover[rn]
        tot = b.cover[node]
        b.value[node] = (b.value[ln] * b.cover[ln] + b.value[rn] * b.cover[rn]) / tot if tot > 0 else 0.0
        return node

    grow(0, 0)
    return b.finish()
