"""Per-recording feature extraction and training-set assembly."""
from __future__ import annotations

import csv
import logging
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .. import signal as sig
from .._utils import fmt_float
from .catalogue import BAND_INDEXED, BAND_NAMES, MEASURES, FeatureDescriptor, columns_for
from .measures import (
    BANDS,
    DegenerateSignalWarning,
    band_powers,
    complexity_features,
    entropy_features,
    psd_regression_features,
    quantile_features,
    spectral_hjorth_complexity,
    temporal_features,
    wavelet_energies,
)

log = logging.getLogger(__name__)

VARIANTS = ("128-All", "128-EC", "128-EO", "12-All", "12-EC", "12-EO")
DEFAULT_EPOCH_S = {"EO": 2.0, "EC": 4.0}


class DatasetError(ValueError):
    pass


def variant_spec(variant: str) -> tuple[bool, tuple[str, ...]]:
    """(uses regional channels, required states) for a training-set variant."""
    if variant not in VARIANTS:
        raise DatasetError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    dim, state = variant.split("-")
    states = ("EC", "EO") if state == "All" else (state,)
    return dim == "12", states



def epoch_measures(x: np.ndarray, rate: float, band: str) -> np.ndarray:
    """Per-band measures for a batch of epoch signals ``(n, n_samples)``.

    Columns follow the catalogue order with band-indexed measures removed.
    """
    lo, hi = BANDS[band]
    tf = temporal_features(x)
    ps = psd_regression_features(x, rate, (lo, hi))
    hs = spectral_hjorth_complexity(x, rate)[:, None]
    qt = quantile_features(x)
    ent = entropy_features(x, rate)
    cx = complexity_features(x, rate)
    # higuchi, samp, app, spect_entropy, svd_fisher, hurst
    tail = np.column_stack([cx[:, 0], ent[:, 0], ent[:, 1], ent[:, 2], cx[:, 2], cx[:, 3]])
    return np.hstack([tf, ps, hs, qt, tail])


def average_epochs(per_epoch: np.ndarray) -> np.ndarray:
    """Mean over the leading epoch axis, independent of epoch order."""
    return np.sort(per_epoch, axis=0).mean(axis=0)


def extract_recording(rec: sig.Recording, epoch_duration_s: float | None = None) -> tuple[list[FeatureDescriptor], np.ndarray]:
    """Epoch-averaged feature vector for every (channel, band, measure).

    Each band is isolated with a zero-phase band-pass, cut into epochs, the
    measures computed per epoch and averaged. Band power and wavelet energy
    are computed once on the whole-spectrum signal and filed under the band
    they describe.
    """
    duration = epoch_duration_s or DEFAULT_EPOCH_S[rec.state]
    rate = rec.sampling_rate_hz
    n_per = sig.epoch_samples(duration, rate)
    n_ch = len(rec.channel_names)
    per_band: dict[str, np.ndarray] = {}
    indexed: dict[str, np.ndarray] = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateSignalWarning)
        for band in BAND_NAMES:
            lo, hi = BANDS[band]
            filtered = sig.bandpass_array(rec.data, lo, hi, rate)
            ep = sig.epoch_array(filtered, n_per)  # (n_ep, n_ch, n_per)
            flat = ep.reshape(-1, n_per)
            vals = epoch_measures(flat, rate, band).reshape(ep.shape[0], n_ch, -1)
            per_band[band] = average_epochs(vals)
            if band == "omega":
                bp = band_powers(flat, rate).reshape(ep.shape[0], n_ch, -1)
                we = wavelet_energies(flat, rate).reshape(ep.shape[0], n_ch, -1)
                indexed["pow_freq_bands"] = average_epochs(bp)
                indexed["wavelet_coef_energy"] = average_epochs(we)

    descriptors = columns_for([rec.state], rec.channel_names)
    values = np.empty(len(descriptors))
    band_pos = {b: i for i, b in enumerate(BAND_NAMES)}
    col = 0
    for ci in range(n_ch):
        for band in BAND_NAMES:
            k = 0
            for measure, comps in MEASURES:
                for _ in comps:
                    if measure in BAND_INDEXED:
                        values[col] = indexed[measure][ci, band_pos[band]]
                    else:
                        values[col] = per_band[band][ci, k]
                        k += 1
                    col += 1
    if not np.all(np.isfinite(values)):
        raise DatasetError(f"non-finite features for {rec.subject_id}/{rec.state}")
    return descriptors, values


@dataclass
class FeatureMatrix:
    descriptors: list[FeatureDescriptor]
    X: np.ndarray
    subject_ids: list[str]
    ages: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.ages = np.asarray(self.ages, dtype=np.float64)
        if self.X.shape != (len(self.subject_ids), len(self.descriptors)):
            raise DatasetError("feature matrix shape does not match ids/descriptors")
        if np.isnan(self.X).any():
            raise DatasetError("feature matrix contains NaN")

    @property
    def columns(self) -> list[str]:
        return [d.name for d in self.descriptors]

    def select(self, mask) -> "FeatureMatrix":
        mask = np.asarray(mask)
        return FeatureMatrix(
            [d for d, keep in zip(self.descriptors, mask) if keep],
            self.X[:, mask], list(self.subject_ids), self.ages.copy(), dict(self.metadata),
        )

    def rows(self, index) -> "FeatureMatrix":
        index = np.asarray(index)
        return FeatureMatrix(
            list(self.descriptors), self.X[index],
            [self.subject_ids[i] for i in index], self.ages[index], dict(self.metadata),
        )

    def to_csv(self, path: str | Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["subject_id", "age"] + self.columns)
            for sid, age, row in zip(self.subject_ids, self.ages, self.X):
                w.writerow([sid, fmt_float(age)] + [fmt_float(v) for v in row])

    @classmethod
    def from_csv(cls, path: str | Path) -> "FeatureMatrix":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:2] != ["subject_id", "age"]:
                raise DatasetError(f"{path}: header must start with subject_id,age")
            ids, ages, rows = [], [], []
            for rec in reader:
                ids.append(rec[0])
                ages.append(float(rec[1]))
                rows.append([float(v) for v in rec[2:]])
        descriptors = [FeatureDescriptor.parse(c) for c in header[2:]]
        X = np.array(rows, dtype=np.float64).reshape(len(ids), len(descriptors))
        return cls(descriptors, X, ids, np.array(ages))


def _subject_features(recs: dict[str, sig.Recording], states, region_map):
    blocks = []
    for state in states:
        rec = recs[state]
        if region_map is not None:
            rec = sig.combine_regions(rec, region_map)
        blocks.append(extract_recording(rec))
    descriptors = [d for ds, _ in blocks for d in ds]
    return descriptors, np.concatenate([v for _, v in blocks])


def build_training_set(
    recordings: Iterable[sig.Recording],
    variant: str,
    region_map: sig.RegionMap | None = None,
    n_jobs: int = 1,
) -> FeatureMatrix:
    """Flatten per-subject features for one of the six training-set variants.

    Subjects lacking a state the variant needs are dropped with a warning.
    Rows are ordered by subject id.
    """
    regional, states = variant_spec(variant)
    if regional and region_map is None:
        raise DatasetError(f"variant {variant} needs a region map")
    by_subject: dict[str, dict[str, sig.Recording]] = defaultdict(dict)
    for rec in recordings:
        if rec.state in states:
            by_subject[rec.subject_id][rec.state] = rec
    usable = []
    for sid in sorted(by_subject):
        missing = [s for s in states if s not in by_subject[sid]]
        if missing:
            log.warning("dropping subject %s: missing state(s) %s", sid, missing)
            continue
        if by_subject[sid][states[0]].age_years is None:
            log.warning("dropping subject %s: no age label", sid)
            continue
        usable.append(sid)
    if not usable:
        raise DatasetError(f"no subject has the states required by {variant}")

    rmap = region_map if regional else None
    results = Parallel(n_jobs=n_jobs)(delayed(_subject_features)(by_subject[sid], states, rmap) for sid in usable)
    descriptors = results[0][0]
    for sid, (ds, _) in zip(usable, results):
        if ds != descriptors:
            raise DatasetError(f"subject {sid} has a different channel layout")
    X = np.vstack([v for _, v in results])
    ages = np.array([by_subject[sid][states[0]].age_years for sid in usable])
    log.info("%s: %d subjects x %d features", variant, X.shape[0], X.shape[1])
    return FeatureMatrix(descriptors, X, usable, ages, {"variant": variant})


# ---------------------------------------------------------------------------
# standardisation

class Standardizer(TransformerMixin, BaseEstimator):
    """Column-wise z-scoring fitted on training rows only.

    Columns with zero training variance are passed through untouched and
    listed in ``constant_``.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.constant_ = std == 0
        self.scale_ = np.where(self.constant_, 1.0, std)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        centre = np.where(self.constant_, 0.0, self.mean_)
        return (X - centre) / self.scale_

    def get_state(self) -> dict:
        return {"mean": self.mean_.tolist(), "scale": self.scale_.tolist(), "constant": self.constant_.tolist()}

    @classmethod
    def from_state(cls, state: dict) -> "Standardizer":
        obj = cls()
        obj.mean_ = np.asarray(state["mean"], dtype=np.float64)
        obj.scale_ = np.asarray(state["scale"], dtype=np.float64)
        obj.constant_ = np.asarray(state["constant"], dtype=bool)
        obj.n_features_in_ = len(obj.mean_)
        return obj


def standardize_fit_apply(train: np.ndarray, test: np.ndarray) -> tuple[np.ndarray, np.ndarray, Standardizer]:
    scaler = Standardizer().fit(train)
    return scaler.transform(train), scaler.transform(test), scaler


def subset_states(matrix: FeatureMatrix, states: Sequence[str]) -> FeatureMatrix:
    return matrix.select([d.state in set(states) for d in matrix.descriptors])
