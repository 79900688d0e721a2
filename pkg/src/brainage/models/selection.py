"""Training, stratified cross-validation and seeded random search."""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed

from .._utils import derive_seed, rng_for
from ..features.extraction import Standardizer
from .base import ConvergenceWarning, SchemaError, decode_state, encode_state
from .registry import get_family

log = logging.getLogger(__name__)


def stratified_kfold(ages: Sequence[float], k: int = 3, seed: int = 0) -> np.ndarray:
    """Fold index per subject, stratified on whole years of age.

    Members of each year class are shuffled with a seeded generator and
    dealt round-robin over the folds. The dealing position carries over
    from one class to the next, so overall fold sizes also differ by at
    most one.
    """
    ages = np.asarray(ages, dtype=np.float64)
    n = len(ages)
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of subjects ({n})")
    rng = rng_for(seed, "stratified-kfold")
    years = np.floor(ages)
    folds = np.empty(n, dtype=np.int64)
    offset = 0
    for year in np.unique(years):
        members = rng.permutation(np.flatnonzero(years == year))
        folds[members] = (offset + np.arange(len(members))) % k
        offset = (offset + len(members)) % k
    return folds


# ---------------------------------------------------------------------------
# trained model artifact

@dataclass
class TrainedModel:
    """A fitted estimator plus what is needed to apply it to new rows."""

    family: str
    hyper: dict
    estimator: object
    columns: list[str]
    scaler: Standardizer | None
    seed: int
    metadata: dict = field(default_factory=dict)

    @property
    def standardized(self) -> bool:
        return self.scaler is not None

    @property
    def target_encoded(self) -> bool:
        return get_family(self.family).tree

    @property
    def converged(self) -> bool:
        return bool(getattr(self.estimator, "converged", True))

    def check_columns(self, columns: Sequence[str] | None, n_cols: int) -> None:
        if columns is not None and list(columns) != list(self.columns):
            missing = sorted(set(self.columns) - set(columns))[:3]
            raise SchemaError(f"column mismatch with training schema (e.g. missing {missing})")
        if n_cols != len(self.columns):
            raise SchemaError(f"model expects {len(self.columns)} columns, got {n_cols}")

    def transform(self, X: np.ndarray) -> np.ndarray:
        """Raw feature rows to the estimator's input space."""
        return self.scaler.transform(X) if self.scaler is not None else np.asarray(X, dtype=np.float64)

    def predict(self, X, columns: Sequence[str] | None = None) -> np.ndarray:
        if hasattr(X, "descriptors"):
            columns, X = X.columns, X.X
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        self.check_columns(columns, X.shape[1])
        out = self.estimator.predict(self.transform(X))
        if not np.all(np.isfinite(out)):
            raise FloatingPointError(f"{self.family} produced non-finite predictions")
        return out

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "hyper": encode_state(self.hyper),
            "params": encode_state(self.estimator),
            "columns": list(self.columns),
            "preprocessing": {
                "standardized": self.standardized,
                "target_encoded": self.target_encoded,
                "scaler": self.scaler.get_state() if self.scaler is not None else None,
            },
            "seed": int(self.seed),
            "converged": self.converged,
            "metadata": encode_state(self.metadata),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedModel":
        sc = d["preprocessing"]["scaler"]
        return cls(
            family=d["family"], hyper=decode_state(d["hyper"]), estimator=decode_state(d["params"]),
            columns=list(d["columns"]), scaler=Standardizer.from_state(sc) if sc is not None else None,
            seed=int(d["seed"]), metadata=decode_state(d.get("metadata", {})),
        )

    def save(self, path: str | Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path: str | Path) -> "TrainedModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fit_model(family: str, hyper: dict, X: np.ndarray, y: np.ndarray,
              columns: Sequence[str] | None = None, seed: int = 0) -> TrainedModel:
    """Fit one family on raw feature rows.

    Non-tree families see train-fitted z-scored columns; tree families see
    raw columns and year-class targets.
    """
    fam = get_family(family)
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.isnan(X).any() or np.isnan(y).any():
        raise ValueError("training data contains NaN")
    if X.shape[0] < 2:
        raise ValueError("need at least two training rows")
    scaler = None if fam.tree else Standardizer().fit(X)
    Xt = X if scaler is None else scaler.transform(X)
    est = fam.build(hyper, X.shape[1], derive_seed(seed, family))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        est.fit(Xt, y)
    cols = list(columns) if columns is not None else [f"x{i}" for i in range(X.shape[1])]
    model = TrainedModel(family, dict(hyper), est, cols, scaler, int(seed))
    assert model.standardized != fam.tree
    if not model.converged:
        log.warning("%s did not converge with %s", family, hyper)
    return model


# ---------------------------------------------------------------------------
# cross-validation

@dataclass
class CVResult:
    family: str
    hyper: dict
    fold_mae: list[float]
    folds: list[int]
    seed: int
    converged: bool = True

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_mae))

    @property
    def std(self) -> float:
        return float(np.std(self.fold_mae))

    def to_dict(self) -> dict:
        return {"family": self.family, "hyper": encode_state(self.hyper), "fold_mae": list(self.fold_mae),
                "mean": self.mean, "std": self.std, "folds": list(self.folds), "seed": self.seed,
                "converged": self.converged}

    @classmethod
    def from_dict(cls, d: dict) -> "CVResult":
        return cls(d["family"], decode_state(d["hyper"]), list(d["fold_mae"]), list(d["folds"]),
                   int(d["seed"]), bool(d.get("converged", True)))


def _fold_mae(family, hyper, X, y, folds, fold, seed):
    tr, te = folds != fold, folds == fold
    model = fit_model(family, hyper, X[tr], y[tr], seed=derive_seed(seed, "fold", fold))
    pred = model.predict(X[te])
    return float(np.mean(np.abs(pred - y[te]))), model.converged


def cross_validate(family: str, hyper: dict, X, y=None, k: int = 3, seed: int = 0,
                   folds: np.ndarray | None = None) -> CVResult:
    """Stratified k-fold MAE (years) for one hyperparameter point.

    ``X`` may be a FeatureMatrix, in which case ``y`` defaults to its ages.
    """
    if hasattr(X, "descriptors"):
        y = X.ages if y is None else y
        X = X.X
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    folds = stratified_kfold(y, k, seed) if folds is None else np.asarray(folds)
    res = [_fold_mae(family, hyper, X, y, folds, f, seed) for f in range(int(folds.max()) + 1)]
    return CVResult(family, dict(hyper), [m for m, _ in res], folds.tolist(), int(seed), all(c for _, c in res))


@dataclass
class SearchResult:
    best_hyper: dict
    best_cv: CVResult
    trials: list[CVResult]


def sample_points(family: str, budget: int, seed: int) -> list[dict]:
    rng = rng_for(seed, "search", family)
    fam = get_family(family)
    return [fam.sample(rng) for _ in range(budget)]


def random_search(family: str, X, y=None, budget: int = 50, seed: int = 0, k: int = 3,
                  n_jobs: int = 1) -> SearchResult:
    """Seeded random search minimizing mean CV MAE.

    Every point shares the same folds. Ties go to the lower fold std, then
    to the point sampled first.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if hasattr(X, "descriptors"):
        y = X.ages if y is None else y
        X = X.X
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    folds = stratified_kfold(y, k, seed)
    points = sample_points(family, budget, seed)
    trials = Parallel(n_jobs=n_jobs)(delayed(cross_validate)(family, h, X, y, k, seed, folds) for h in points)
    best = min(range(len(trials)), key=lambda i: (trials[i].mean, trials[i].std, i))
    return SearchResult(dict(points[best]), trials[best], list(trials))
