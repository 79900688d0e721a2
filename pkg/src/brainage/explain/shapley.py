"""Shapley attributions: the ShapMatrix container, a brute-force oracle, the
kernel (weighted least squares) estimator and antithetic permutation
sampling for feature counts too large to enumerate."""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .._utils import derive_seed, fmt_float, rng_for

MAX_ENUMERATION = 12
FULL_KERNEL_ENUMERATION = 14


class ShapError(ValueError):
    pass


class RidgeDampingWarning(UserWarning):
    pass


@dataclass
class ShapMatrix:
    """Attributions for a set of explained rows.

    ``values[i, j]`` is the contribution of column j to the prediction for
    sample i, relative to ``base_value``.
    """

    model: str
    sample_ids: list[str]
    columns: list[str]
    values: np.ndarray
    base_value: float
    method: str = "kernel"
    n_coalitions: int | None = None
    seed: int = 0
    ages: np.ndarray | None = None
    predictions: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.sample_ids), len(self.columns)):
            raise ShapError("SHAP value shape does not match sample ids / columns")

    def local_accuracy_gap(self) -> np.ndarray:
        if self.predictions is None:
            raise ShapError("predictions were not recorded")
        return np.abs(self.base_value + self.values.sum(axis=1) - self.predictions)

    def sidecar(self) -> dict:
        return {"model": self.model, "base_value": self.base_value, "method": self.method,
                "n_coalitions": self.n_coalitions, "seed": self.seed,
                "predictions": None if self.predictions is None else self.predictions.tolist(),
                **self.metadata}

    def to_csv(self, path: str | Path) -> None:
        """Write values with the feature-matrix header plus a sidecar JSON."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        ages = self.ages if self.ages is not None else np.full(len(self.sample_ids), np.nan)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["subject_id", "age"] + list(self.columns))
            for sid, age, row in zip(self.sample_ids, ages, self.values):
                w.writerow([sid, fmt_float(age)] + [fmt_float(v) for v in row])
        with open(path.with_suffix(".json"), "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "ShapMatrix":
        path = Path(path)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            ids, ages, rows = [], [], []
            for rec in reader:
                ids.append(rec[0])
                ages.append(float(rec[1]))
                rows.append([float(v) for v in rec[2:]])
        side = json.loads(path.with_suffix(".json").read_text())
        preds = side.pop("predictions", None)
        known = {"model", "base_value", "method", "n_coalitions", "seed"}
        return cls(
            side["model"], ids, header[2:], np.array(rows).reshape(len(ids), len(header) - 2),
            float(side["base_value"]), side["method"], side["n_coalitions"], int(side["seed"]),
            np.array(ages), None if preds is None else np.array(preds),
            {k: v for k, v in side.items() if k not in known},
        )


# ---------------------------------------------------------------------------
# value functions

def _as_predict(model) -> Callable[[np.ndarray], np.ndarray]:
    return model if callable(model) and not hasattr(model, "predict") else model.predict


def coalition_values(predict, background: np.ndarray, x: np.ndarray, masks: np.ndarray,
                     max_elements: int = 8_000_000) -> np.ndarray:
    """``v(S)`` for each boolean mask row: mean prediction over the
    background with the features in S taken from ``x``.

    Hybrid rows are built and predicted in batches of at most
    ``max_elements`` matrix entries.
    """
    m, p = background.shape
    out = np.empty(len(masks))
    step = max(1, max_elements // (m * p))
    for s in range(0, len(masks), step):
        z = masks[s:s + step]
        # select rather than interpolate so copied values stay bit-exact
        rows = np.where(z[:, None, :], x[None, None, :], background[None, :, :]).reshape(-1, p)
        out[s:s + step] = predict(rows).reshape(len(z), m).mean(axis=1)
    return out


def all_masks(p: int) -> np.ndarray:
    """Every subset of p players as boolean rows, in binary counting order."""
    codes = np.arange(1 << p, dtype=np.int64)
    return ((codes[:, None] >> np.arange(p)[None, :]) & 1).astype(bool)


def shapley_from_values(v: np.ndarray, p: int) -> np.ndarray:
    """Classical Shapley sum from the value of every subset (indexed by bitmask)."""
    phi = np.zeros(p)
    fact = [math.factorial(k) for k in range(p + 1)]
    sizes = np.array([bin(c).count("1") for c in range(1 << p)])
    for i in range(p):
        bit = 1 << i
        without = np.array([c for c in range(1 << p) if not c & bit], dtype=np.int64)
        w = np.array([fact[s] * fact[p - s - 1] / fact[p] for s in sizes[without]])
        phi[i] = np.sum(w * (v[without | bit] - v[without]))
    return phi


def exact_shap_enumeration(model, background: np.ndarray, x: np.ndarray,
                           value_fn: Callable[[np.ndarray], np.ndarray] | None = None) -> np.ndarray:
    """Brute-force Shapley values by summing over all 2^p subsets.

    By default ``v(S)`` imputes features outside S from the background rows.
    ``value_fn`` may supply a different game, mapping boolean masks to values.
    """
    x = np.asarray(x, dtype=np.float64)
    p = x.shape[0]
    if p > MAX_ENUMERATION:
        raise ShapError(f"enumeration refused for p={p} > {MAX_ENUMERATION}")
    masks = all_masks(p)
    if value_fn is None:
        v = coalition_values(_as_predict(model), np.atleast_2d(background), x, masks)
    else:
        v = np.asarray(value_fn(masks), dtype=np.float64)
    return shapley_from_values(v, p)


# ---------------------------------------------------------------------------
# kernel estimator

def shapley_kernel_weight(p: int, s: np.ndarray) -> np.ndarray:
    """Kernel weight of a single coalition of size s (0 < s < p)."""
    s = np.asarray(s, dtype=np.int64)
    binom = np.array([math.comb(p, int(k)) for k in s.ravel()], dtype=np.float64).reshape(s.shape)
    return (p - 1) / (binom * s * (p - s))


@dataclass
class CoalitionDesign:
    """Coalitions and the factored constrained least-squares system.

    The efficiency constraint is eliminated by substituting the last
    feature's value, leaving an unconstrained weighted problem in p-1
    unknowns whose normal matrix is factored once and reused for every
    explained sample.
    """

    masks: np.ndarray
    weights: np.ndarray
    exact: bool
    factor: object = None
    damped: bool = False
    _AtW: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_features(self) -> int:
        return self.masks.shape[1]

    def solve(self, v: np.ndarray, base: float, fx: float) -> np.ndarray:
        p = self.n_features
        delta = fx - base
        if p == 1:
            return np.array([delta])
        if self._AtW is None:
            Z = self.masks.astype(np.float64)
            self._AtW = ((Z[:, :-1] - Z[:, -1:]) * self.weights[:, None]).T
        rhs = v - base - self.masks[:, -1] * delta
        phi = np.empty(p)
        phi[:-1] = cho_solve(self.factor, self._AtW @ rhs)
        phi[-1] = delta - phi[:-1].sum()
        return phi


def coalition_design(p: int, n_coalitions: int | None = None, seed: int = 0) -> CoalitionDesign:
    """All proper coalitions when p is small, else paired kernel-weighted samples.

    Sampled coalitions are drawn with probability proportional to their
    Shapley kernel weight (size first, then uniformly within size), each
    followed by its complement, and enter the regression with equal weight.
    """
    if p <= FULL_KERNEL_ENUMERATION:
        masks = all_masks(p)[1:-1] if p > 1 else np.zeros((0, p), dtype=bool)
        weights = shapley_kernel_weight(p, masks.sum(axis=1)) if p > 1 else np.zeros(0)
        exact = True
    else:
        need = 2 * p + 2
        n = need if n_coalitions is None else int(n_coalitions)
        if n < need:
            raise ShapError(f"n_coalitions={n} is below the minimum 2p+2={need}")
        n += n % 2
        rng = rng_for(seed, "coalitions", p)
        sizes = np.arange(1, p)
        # total kernel weight of all coalitions of each size
        size_w = (p - 1) / (sizes * (p - sizes))
        drawn = rng.choice(sizes, size=n // 2, p=size_w / size_w.sum())
        masks = np.zeros((n, p), dtype=bool)
        for k, s in enumerate(drawn):
            masks[2 * k, rng.choice(p, s, replace=False)] = True
            masks[2 * k + 1] = ~masks[2 * k]
        weights = np.ones(n)
        exact = False
    design = CoalitionDesign(masks, weights, exact)
    if p > 1:
        Z = masks.astype(np.float64)
        A = Z[:, :-1] - Z[:, -1:]
        G = A.T @ (weights[:, None] * A)
        try:
            design.factor = cho_factor(G, lower=True)
        except LinAlgError:
            warnings.warn("singular coalition system; adding ridge damping 1e-8", RidgeDampingWarning, stacklevel=2)
            design.factor = cho_factor(G + 1e-8 * np.eye(p - 1), lower=True)
            design.damped = True
    return design


def kernel_shap(model, background: np.ndarray, x: np.ndarray, n_coalitions: int | None = None,
                seed: int = 0, design: CoalitionDesign | None = None) -> tuple[np.ndarray, float]:
    """Kernel SHAP for one sample; returns (phi, base value).

    Missing features are imputed from each background row and predictions
    averaged. The regression is constrained so that ``base + sum(phi)``
    equals the prediction exactly.
    """
    predict = _as_predict(model)
    background = np.atleast_2d(np.asarray(background, dtype=np.float64))
    x = np.asarray(x, dtype=np.float64)
    if background.shape[0] == 0:
        raise ShapError("background set is empty")
    p = x.shape[0]
    design = design or coalition_design(p, n_coalitions, seed)
    base = float(np.mean(predict(background)))
    fx = float(predict(x[None, :])[0])
    v = coalition_values(predict, background, x, design.masks)
    return design.solve(v, base, fx), base


def kernel_shap_matrix(model, background: np.ndarray, X: np.ndarray, n_coalitions: int | None = None,
                       seed: int = 0) -> tuple[np.ndarray, float, int]:
    """Kernel SHAP for every row of X with one shared coalition design."""
    predict = _as_predict(model)
    background = np.atleast_2d(np.asarray(background, dtype=np.float64))
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    design = coalition_design(X.shape[1], n_coalitions, seed)
    base = float(np.mean(predict(background)))
    fx = predict(X)
    phi = np.empty(X.shape)
    for i, x in enumerate(X):
        v = coalition_values(predict, background, x, design.masks)
        phi[i] = design.solve(v, base, float(fx[i]))
    return phi, base, len(design.masks)


# ---------------------------------------------------------------------------
# permutation estimator

def permutation_shap(model, background: np.ndarray, x: np.ndarray, n_permutations: int = 2,
                     seed: int = 0) -> tuple[np.ndarray, float]:
    """Shapley values averaged over sampled feature orderings.

    Orderings come in antithetic pairs (a random permutation and its
    reverse), so ``n_permutations`` must be even. Each ordering adds
    features one at a time and credits every feature with the change in
    ``v``; the credits telescope, so ``base + sum(phi)`` equals the
    prediction for any number of orderings. A feature the model ignores
    is credited exactly zero, and an additive model is recovered exactly.

    Returns (phi, base value).
    """
    predict = _as_predict(model)
    background = np.atleast_2d(np.asarray(background, dtype=np.float64))
    x = np.asarray(x, dtype=np.float64)
    if background.shape[0] == 0:
        raise ShapError("background set is empty")
    base = float(np.mean(predict(background)))
    fx = float(predict(x[None, :])[0])
    return _permutation_phi(predict, background, x, base, fx, n_permutations, seed), base


def _permutation_phi(predict, background, x, base, fx, n_permutations, seed):
    if n_permutations < 2 or n_permutations % 2:
        raise ShapError(f"n_permutations must be a positive even number, got {n_permutations}")
    p = x.shape[0]
    rng = rng_for(seed, "permutations", p)
    phi = np.zeros(p)
    steps = np.tri(p + 1, p, -1, dtype=bool)  # row k holds the first k positions
    for _ in range(n_permutations // 2):
        perm = rng.permutation(p)
        for order in (perm, perm[::-1]):
            masks = np.zeros((p + 1, p), dtype=bool)
            masks[:, order] = steps
            v = np.empty(p + 1)
            v[0], v[-1] = base, fx
            v[1:-1] = coalition_values(predict, background, x, masks[1:-1])
            phi[order] += np.diff(v)
    return phi / n_permutations


def permutation_shap_matrix(model, background: np.ndarray, X: np.ndarray, n_permutations: int = 2,
                            seed: int = 0) -> tuple[np.ndarray, float, int]:
    """Permutation estimates for every row of X; returns (phi, base, coalitions per row).

    Row i draws its orderings from ``derive_seed(seed, "row", i)``, so a
    row's attribution does not depend on which other rows are explained.
    """
    predict = _as_predict(model)
    background = np.atleast_2d(np.asarray(background, dtype=np.float64))
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if background.shape[0] == 0:
        raise ShapError("background set is empty")
    base = float(np.mean(predict(background)))
    fx = predict(X)
    phi = np.empty(X.shape)
    for i, x in enumerate(X):
        phi[i] = _permutation_phi(predict, background, x, base, float(fx[i]), n_permutations,
                                  derive_seed(seed, "row", i))
    return phi, base, n_permutations * (X.shape[1] - 1)


def sample_background(X: np.ndarray, n: int = 100, seed: int = 0) -> np.ndarray:
    """Seeded subset of training rows (all rows if there are at most n)."""
    X = np.asarray(X, dtype=np.float64)
    if len(X) <= n:
        return X.copy()
    idx = np.sort(rng_for(seed, "background").choice(len(X), n, replace=False))
    return X[idx]


def linear_shap(weights: Sequence[float], background: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Closed-form Shapley values of a linear model with independent inputs."""
    return np.asarray(weights) * (np.asarray(x) - np.asarray(background).mean(axis=0))
