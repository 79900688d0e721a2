"""Cross-model agreement of group-importance rankings and a replication
harness for published age-related EEG findings.

Each fitted model yields one importance score per group (band, measure or
region). Two models agree when they order the groups the same way, which
is measured with Spearman's rho on the group scores. Hypotheses are small
predicates over those rankings and over the sign of value-vs-attribution
trends; every (hypothesis, model) pair evaluates to one of ``replicated``,
``not_replicated`` or ``inapplicable``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from ._utils import fmt_float, write_json
from .explain.groups import KINDS, GroupImportance, Grouping, feature_importance, group_importance, signed_feature_trend
from .explain.shapley import ShapMatrix
from .features.catalogue import FeatureDescriptor
from .features.extraction import FeatureMatrix
from .models.base import SchemaError

REPLICATED = "replicated"
NOT_REPLICATED = "not_replicated"
INAPPLICABLE = "inapplicable"
OUTCOMES = (REPLICATED, NOT_REPLICATED, INAPPLICABLE)


# ---------------------------------------------------------------------------
# rank correlation

def spearman_with_flag(a: Sequence[float], b: Sequence[float]) -> tuple[float, bool]:
    """Spearman's rho and a flag that is True when rho is undefined.

    Ties get their average rank. When either side has no rank variance the
    coefficient is undefined and returned as 0 with the flag set.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError("spearman needs inputs of equal length")
    if len(a) < 2:
        raise ValueError("spearman needs at least two observations")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("spearman inputs must be finite")
    ra = rankdata(a, method="average")
    rb = rankdata(b, method="average")
    ra -= ra.mean()
    rb -= rb.mean()
    sa, sb = float(ra @ ra), float(rb @ rb)
    if sa == 0.0 or sb == 0.0:
        return 0.0, True
    rho = float(ra @ rb) / np.sqrt(sa * sb)
    return float(np.clip(rho, -1.0, 1.0)), False


def spearman(a: Sequence[float], b: Sequence[float]) -> float:
    return spearman_with_flag(a, b)[0]


@dataclass
class AgreementMatrix:
    """Pairwise Spearman rho between models' group-importance scores."""

    kind: str
    models: list[str]
    matrix: np.ndarray
    degenerate: np.ndarray = None
    groups: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        n = len(self.models)
        if self.degenerate is None:
            self.degenerate = np.zeros((n, n), dtype=bool)
        self.degenerate = np.asarray(self.degenerate, dtype=bool)
        if self.matrix.shape != (n, n) or self.degenerate.shape != (n, n):
            raise SchemaError("agreement matrix shape does not match the model list")
        if not np.array_equal(self.matrix, self.matrix.T):
            raise SchemaError("agreement matrix must be symmetric")
        if not np.all(np.diag(self.matrix) == 1.0):
            raise SchemaError("agreement matrix must have a unit diagonal")
        if np.any(np.abs(self.matrix) > 1.0):
            raise SchemaError("agreement values must lie in [-1, 1]")

    def rho(self, a: str, b: str) -> float:
        return float(self.matrix[self.models.index(a), self.models.index(b)])

    def degenerate_pairs(self) -> list[tuple[str, str]]:
        n = len(self.models)
        return [(self.models[i], self.models[j]) for i in range(n) for j in range(i + 1, n) if self.degenerate[i, j]]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "models": list(self.models), "groups": list(self.groups),
            "matrix": [[float(v) for v in row] for row in self.matrix],
            "degenerate": [list(p) for p in self.degenerate_pairs()],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "AgreementMatrix":
        models = list(obj["models"])
        deg = np.zeros((len(models), len(models)), dtype=bool)
        for a, b in obj.get("degenerate", []):
            i, j = models.index(a), models.index(b)
            deg[i, j] = deg[j, i] = True
        return cls(obj["kind"], models, np.array(obj["matrix"], dtype=np.float64), deg, list(obj.get("groups", [])))

    def to_csv(self, path: str | Path) -> None:
        """Square table; undefined coefficients are written as 0 and listed
        in the trailing ``degenerate_with`` column."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model"] + self.models + ["degenerate_with"])
            for i, m in enumerate(self.models):
                flagged = ";".join(self.models[j] for j in np.flatnonzero(self.degenerate[i]))
                w.writerow([m] + [fmt_float(v) for v in self.matrix[i]] + [flagged])

    @classmethod
    def from_csv(cls, path: str | Path, kind: str) -> "AgreementMatrix":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        models = rows[0][1:-1]
        mat = np.array([[float(v) for v in r[1:-1]] for r in rows[1:]])
        deg = np.zeros(mat.shape, dtype=bool)
        for i, r in enumerate(rows[1:]):
            for other in filter(None, r[-1].split(";")):
                deg[i, models.index(other)] = True
        return cls(kind, models, mat, deg)


def agreement_matrix(importances: Mapping[str, GroupImportance], kind: str | None = None) -> AgreementMatrix:
    """Spearman agreement between every pair of models.

    ``importances`` maps model name to its GroupImportance; insertion order
    fixes the row order. All entries must share the grouping kind and the
    group list.
    """
    models = list(importances)
    if not models:
        raise SchemaError("no models to compare")
    first = importances[models[0]]
    kind = kind or first.kind
    for m in models:
        gi = importances[m]
        if gi.kind != kind:
            raise SchemaError(f"model {m!r} is grouped by {gi.kind!r}, expected {kind!r}")
        if list(gi.groups) != list(first.groups):
            raise SchemaError(f"model {m!r} has a different group set than {models[0]!r}")
    n = len(models)
    mat = np.eye(n)
    deg = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            rho, flag = spearman_with_flag(importances[models[i]].scores, importances[models[j]].scores)
            mat[i, j] = mat[j, i] = rho
            deg[i, j] = deg[j, i] = flag
    return AgreementMatrix(kind, models, mat, deg, list(first.groups))


# ---------------------------------------------------------------------------
# evidence per model

_FILTER_KEYS = ("state", "channel", "region", "band", "measure", "component")


def _as_set(v) -> set[str] | None:
    if v is None:
        return None
    return {v} if isinstance(v, str) else set(v)


def match_columns(columns: Sequence[str], selector: Mapping | None, region_of: Mapping[str, str] | None = None) -> np.ndarray:
    """Boolean mask of columns whose descriptor satisfies every filter.

    Each filter value is a string or a list of accepted strings. ``region``
    compares against ``region_of[channel]`` when a map is given and against
    the channel name otherwise (regional variants name channels by region).
    """
    selector = dict(selector or {})
    unknown = set(selector) - set(_FILTER_KEYS)
    if unknown:
        raise ValueError(f"unknown selector keys {sorted(unknown)}")
    want = {k: _as_set(selector.get(k)) for k in _FILTER_KEYS}
    mask = np.zeros(len(columns), dtype=bool)
    for i, c in enumerate(columns):
        d = FeatureDescriptor.parse(c)
        region = region_of.get(d.channel, d.channel) if region_of is not None else d.channel
        got = {"state": d.state, "channel": d.channel, "region": region, "band": d.band,
               "measure": d.measure, "component": d.component}
        mask[i] = all(want[k] is None or got[k] in want[k] for k in _FILTER_KEYS)
    return mask


@dataclass
class ModelEvidence:
    """A model's SHAP matrix with the raw feature values of the explained rows."""

    shap: ShapMatrix
    X: np.ndarray
    region_of: Mapping[str, str] | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.shape != self.shap.values.shape:
            raise SchemaError("feature values must align with the SHAP matrix")
        self._importance = feature_importance(self.shap)
        self._trend = None

    @property
    def columns(self) -> list[str]:
        return list(self.shap.columns)

    @property
    def importance(self) -> np.ndarray:
        return self._importance

    @property
    def trend(self) -> np.ndarray:
        if self._trend is None:
            self._trend = signed_feature_trend(self.shap, self.X)[0]
        return self._trend

    def group_importance(self, kind: str, within: Mapping | None = None) -> GroupImportance:
        mask = match_columns(self.columns, within, self.region_of) if within else np.ones(len(self.columns), bool)
        cols = [c for c, keep in zip(self.columns, mask) if keep]
        if not cols:
            return GroupImportance(kind, [], np.zeros(0))
        return group_importance(self.shap, Grouping.from_columns(cols, kind, self.region_of))


def evidence_for(shap: ShapMatrix, features: FeatureMatrix, region_of: Mapping[str, str] | None = None) -> ModelEvidence:
    """Pair a SHAP matrix with the feature rows of the subjects it explains."""
    pos = {s: i for i, s in enumerate(features.subject_ids)}
    missing = [s for s in shap.sample_ids if s not in pos]
    if missing:
        raise SchemaError(f"feature matrix lacks explained subjects, e.g. {missing[:3]}")
    col = {c: j for j, c in enumerate(features.columns)}
    absent = [c for c in shap.columns if c not in col]
    if absent:
        raise SchemaError(f"feature matrix lacks SHAP columns, e.g. {absent[:3]}")
    rows = np.array([pos[s] for s in shap.sample_ids], dtype=np.int64)
    cols = np.array([col[c] for c in shap.columns], dtype=np.int64)
    return ModelEvidence(shap, features.X[np.ix_(rows, cols)], region_of)


# ---------------------------------------------------------------------------
# hypotheses

CRITERIA = ("rank_top_k", "trend_sign", "rank_above", "untestable")


@dataclass
class Hypothesis:
    """One published finding encoded as a predicate.

    ``rank_top_k`` and ``rank_above`` read a group ranking: ``grouping`` is
    the grouping kind, ``within`` optionally restricts the ranked columns
    (for instance to one band before ranking regions), and the best rank
    among ``groups`` is the target's rank. ``rank_above`` succeeds when that
    rank is strictly better than the best rank among ``other``.
    ``trend_sign`` selects columns with ``columns`` and compares the sign of
    their importance-weighted value-vs-attribution trend with ``sign``.
    ``untestable`` marks findings no catalogue measure can express.
    """

    id: str
    description: str
    criterion: str
    grouping: str | None = None
    groups: list[str] = field(default_factory=list)
    within: dict = field(default_factory=dict)
    k: int | None = None
    other: list[str] = field(default_factory=list)
    columns: dict = field(default_factory=dict)
    sign: str | None = None
    rationale: str = ""

    def __post_init__(self):
        if self.criterion not in CRITERIA:
            raise ValueError(f"{self.id}: criterion must be one of {CRITERIA}")
        self.groups = [self.groups] if isinstance(self.groups, str) else list(self.groups)
        self.other = [self.other] if isinstance(self.other, str) else list(self.other)
        if self.criterion in ("rank_top_k", "rank_above"):
            if self.grouping not in KINDS:
                raise ValueError(f"{self.id}: grouping must be one of {KINDS}")
            if not self.groups:
                raise ValueError(f"{self.id}: ranked hypotheses need target groups")
            match_columns([], self.within)
        if self.criterion == "rank_top_k" and (self.k is None or int(self.k) < 1):
            raise ValueError(f"{self.id}: rank_top_k needs k >= 1")
        if self.criterion == "rank_above" and not self.other:
            raise ValueError(f"{self.id}: rank_above needs the groups to compare against")
        if self.criterion == "trend_sign":
            if self.sign not in ("+", "-"):
                raise ValueError(f"{self.id}: sign must be '+' or '-'")
            if not self.columns:
                raise ValueError(f"{self.id}: trend_sign needs a column selector")
            match_columns([], self.columns)

    def to_dict(self) -> dict:
        out = {"id": self.id, "description": self.description, "criterion": self.criterion}
        for key in ("grouping", "groups", "within", "k", "other", "columns", "sign", "rationale"):
            val = getattr(self, key)
            if val not in (None, [], {}, ""):
                out[key] = val
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "Hypothesis":
        unknown = set(obj) - {"id", "description", "criterion", "grouping", "groups", "within", "k", "other",
                              "columns", "sign", "rationale"}
        if unknown:
            raise ValueError(f"hypothesis {obj.get('id')!r}: unknown fields {sorted(unknown)}")
        return cls(**obj)

    def evaluate(self, ev: ModelEvidence) -> str:
        if self.criterion == "untestable":
            return INAPPLICABLE
        if self.criterion == "trend_sign":
            mask = match_columns(ev.columns, self.columns, ev.region_of)
            if not mask.any():
                return INAPPLICABLE
            score = float(np.sum(ev.importance[mask] * ev.trend[mask]))
            want = 1.0 if self.sign == "+" else -1.0
            return REPLICATED if score * want > 0 else NOT_REPLICATED
        gi = ev.group_importance(self.grouping, self.within)
        ranks = dict(zip(gi.groups, gi.ranks))
        target = [ranks[g] for g in self.groups if g in ranks]
        if not target:
            return INAPPLICABLE
        best = min(target)
        if self.criterion == "rank_top_k":
            return REPLICATED if best <= int(self.k) else NOT_REPLICATED
        other = [ranks[g] for g in self.other if g in ranks]
        if not other:
            return INAPPLICABLE
        return REPLICATED if best < min(other) else NOT_REPLICATED


def load_hypotheses(path: str | Path | None = None) -> list[Hypothesis]:
    """Read a hypotheses file; ``None`` loads the bundled default set."""
    if path is None:
        text = resources.files("brainage").joinpath("data/hypotheses.json").read_text()
    else:
        text = Path(path).read_text()
    obj = json.loads(text)
    items = obj["hypotheses"] if isinstance(obj, dict) else obj
    hyps = [Hypothesis.from_dict(h) for h in items]
    ids = [h.id for h in hyps]
    if len(set(ids)) != len(ids):
        raise ValueError("hypothesis ids must be unique")
    return hyps


@dataclass
class ReplicationMatrix:
    hypotheses: list[str]
    models: list[str]
    cells: list[list[str]]
    descriptions: list[str] = field(default_factory=list)

    def __post_init__(self):
        if len(self.cells) != len(self.hypotheses) or any(len(r) != len(self.models) for r in self.cells):
            raise SchemaError("replication matrix must have one cell per hypothesis and model")
        if any(c not in OUTCOMES for r in self.cells for c in r):
            raise SchemaError(f"cells must be one of {OUTCOMES}")

    def outcome(self, hypothesis: str, model: str) -> str:
        return self.cells[self.hypotheses.index(hypothesis)][self.models.index(model)]

    def count(self, hypothesis: str, outcome: str = REPLICATED) -> int:
        return sum(c == outcome for c in self.cells[self.hypotheses.index(hypothesis)])

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        desc = self.descriptions or [""] * len(self.hypotheses)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["hypothesis"] + self.models + ["n_replicated", "description"])
            for h, row, d in zip(self.hypotheses, self.cells, desc):
                w.writerow([h] + row + [sum(c == REPLICATED for c in row), d])

    @classmethod
    def from_csv(cls, path: str | Path) -> "ReplicationMatrix":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        models = rows[0][1:-2]
        return cls([r[0] for r in rows[1:]], models, [r[1:-2] for r in rows[1:]], [r[-1] for r in rows[1:]])


def evaluate_hypotheses(hypotheses: Sequence[Hypothesis], evidence: Mapping[str, ModelEvidence]) -> ReplicationMatrix:
    models = list(evidence)
    cells = [[h.evaluate(evidence[m]) for m in models] for h in hypotheses]
    return ReplicationMatrix([h.id for h in hypotheses], models, cells, [h.description for h in hypotheses])


# ---------------------------------------------------------------------------

def agreement_matrices(evidence: Mapping[str, ModelEvidence], kinds: Sequence[str] = KINDS) -> dict[str, AgreementMatrix]:
    """One agreement matrix per grouping kind."""
    return {k: agreement_matrix({m: ev.group_importance(k) for m, ev in evidence.items()}, k) for k in kinds}


def write_agreement(out_dir: str | Path, matrices: Mapping[str, AgreementMatrix],
                    importances: Mapping[str, Mapping[str, GroupImportance]] | None = None) -> None:
    """``agreement_<kind>.csv`` per grouping and a combined ``agreement.json``."""
    out_dir = Path(out_dir)
    for kind, am in matrices.items():
        am.to_csv(out_dir / f"agreement_{kind}.csv")
    combined = {"matrices": {k: am.to_dict() for k, am in matrices.items()}}
    if importances is not None:
        combined["importance"] = {k: {m: gi.as_dict() for m, gi in per.items()} for k, per in importances.items()}
    write_json(out_dir / "agreement.json", combined)
