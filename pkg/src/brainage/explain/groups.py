"""Grouping feature columns and cumulative absolute-SHAP importance."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from ..features.catalogue import FeatureDescriptor
from .shapley import ShapError, ShapMatrix

KINDS = ("band", "measure", "region")


@dataclass
class Grouping:
    kind: str
    columns: list[str]
    assignment: list[str]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"grouping kind must be one of {KINDS}")
        if len(self.columns) != len(self.assignment):
            raise ValueError("one group label per column is required")

    @property
    def groups(self) -> list[str]:
        return sorted(set(self.assignment))

    @classmethod
    def from_columns(cls, columns: Sequence[str], kind: str, region_of: dict[str, str] | None = None) -> "Grouping":
        """Derive the group of each column from its descriptor.

        Region grouping uses the column's channel directly (regional
        variants already carry region names) unless ``region_of`` maps
        electrode names to regions.
        """
        labels = []
        for c in columns:
            d = FeatureDescriptor.parse(c)
            if kind == "band":
                labels.append(d.band)
            elif kind == "measure":
                labels.append(d.measure)
            elif kind == "region":
                labels.append(region_of[d.channel] if region_of is not None else d.channel)
            else:
                raise ValueError(f"grouping kind must be one of {KINDS}")
        return cls(kind, list(columns), labels)


@dataclass
class GroupImportance:
    kind: str
    groups: list[str]
    scores: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if np.any(self.scores < 0):
            raise ValueError("group importance scores must be non-negative")

    @property
    def ranks(self) -> np.ndarray:
        """1 = most important; ties share their average rank."""
        return rankdata(-self.scores, method="average")

    def ranked(self) -> list[tuple[str, float]]:
        order = sorted(range(len(self.groups)), key=lambda i: (-self.scores[i], self.groups[i]))
        return [(self.groups[i], float(self.scores[i])) for i in order]

    def as_dict(self) -> dict[str, float]:
        return {g: float(s) for g, s in zip(self.groups, self.scores)}


def feature_importance(shap: ShapMatrix) -> np.ndarray:
    """Mean absolute attribution per column."""
    if shap.values.shape[0] == 0:
        raise ShapError("no explained samples")
    return np.abs(shap.values).mean(axis=0)


def group_importance(shap: ShapMatrix, grouping: Grouping) -> GroupImportance:
    """Sum of member columns' mean |phi| for every group."""
    index = {c: i for i, c in enumerate(shap.columns)}
    missing = [c for c in grouping.columns if c not in index]
    if missing:
        raise ShapError(f"SHAP matrix lacks grouped columns, e.g. {missing[:3]}")
    per_feature = feature_importance(shap)
    groups = grouping.groups
    pos = {g: k for k, g in enumerate(groups)}
    scores = np.zeros(len(groups))
    for c, g in zip(grouping.columns, grouping.assignment):
        scores[pos[g]] += per_feature[index[c]]
    return GroupImportance(grouping.kind, groups, scores)


def signed_feature_trend(shap: ShapMatrix, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pearson correlation between each column's value and its attribution.

    Returns (trend, flagged); columns where either side has zero variance
    get trend 0 and are flagged.
    """
    X = np.asarray(X, dtype=np.float64)
    phi = shap.values
    if X.shape != phi.shape:
        raise ShapError("feature values must align with the SHAP matrix")
    if X.shape[0] < 3:
        raise ShapError("need at least three samples for a trend")
    xc = X - X.mean(axis=0)
    pc = phi - phi.mean(axis=0)
    sx = np.sqrt((xc * xc).sum(axis=0))
    sp = np.sqrt((pc * pc).sum(axis=0))
    scale = np.maximum(np.abs(X).max(axis=0), 1e-300)
    pscale = np.maximum(np.abs(phi).max(axis=0), 1e-300)
    flagged = (sx <= 1e-12 * scale * np.sqrt(len(X))) | (sp <= 1e-12 * pscale * np.sqrt(len(X)))
    with warnings.catch_warnings(), np.errstate(invalid="ignore", divide="ignore"):
        warnings.simplefilter("ignore")
        r = (xc * pc).sum(axis=0) / (sx * sp)
    r = np.where(flagged, 0.0, np.clip(r, -1.0, 1.0))
    return r, flagged
