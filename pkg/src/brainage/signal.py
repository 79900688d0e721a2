"""Recording container, bundle I/O and the preprocessing primitives.

Covers resampling, zero-phase band-pass filtering, epoching, RANSAC channel
rejection, bad-channel interpolation and averaging of electrodes into scalp
regions.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import signal as sp_signal

log = logging.getLogger(__name__)

STATES = ("EC", "EO")


class SignalError(ValueError):
    """Raised for invalid recordings or preprocessing parameters."""


@dataclass
class Recording:
    """A multichannel resting-state recording.

    ``data`` has shape ``(n_channels, n_samples)`` in microvolts.
    """

    subject_id: str
    state: str
    sampling_rate_hz: float
    channel_names: list[str]
    data: np.ndarray
    age_years: float | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.channel_names = list(self.channel_names)
        if self.state not in STATES:
            raise SignalError(f"state must be one of {STATES}, got {self.state!r}")
        if not self.sampling_rate_hz > 0:
            raise SignalError("sampling_rate_hz must be positive")
        if self.data.ndim != 2 or self.data.shape[0] != len(self.channel_names):
            raise SignalError(
                f"data rows ({self.data.shape}) do not match "
                f"{len(self.channel_names)} channel names"
            )
        if not np.all(np.isfinite(self.data)):
            raise SignalError(f"recording {self.subject_id}/{self.state} has non-finite samples")
        if self.age_years is not None and self.age_years < 0:
            raise SignalError("age_years must be non-negative")

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sampling_rate_hz

    def replace(self, **changes) -> "Recording":
        return dataclasses.replace(self, **changes)

    def pick(self, names: Sequence[str]) -> "Recording":
        idx = [self.channel_names.index(n) for n in names]
        return self.replace(channel_names=list(names), data=self.data[idx])


# ---------------------------------------------------------------------------
# bundle I/O

def write_bundle(rec: Recording, directory: str | Path) -> Path:
    """Write ``meta.json`` + ``data.f32le`` (row-major, little-endian float32)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "subject_id": rec.subject_id,
        "age_years": rec.age_years,
        "state": rec.state,
        "sampling_rate_hz": rec.sampling_rate_hz,
        "channel_names": rec.channel_names,
    }
    with open(directory / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    rec.data.astype("<f4").tofile(directory / "data.f32le")
    return directory


def read_bundle(directory: str | Path) -> Recording:
    directory = Path(directory)
    with open(directory / "meta.json") as fh:
        meta = json.load(fh)
    n_ch = len(meta["channel_names"])
    raw = np.fromfile(directory / "data.f32le", dtype="<f4")
    if n_ch == 0 or raw.size % n_ch:
        raise SignalError(f"{directory}: data size {raw.size} not divisible by {n_ch} channels")
    return Recording(
        subject_id=str(meta["subject_id"]),
        state=meta["state"],
        sampling_rate_hz=float(meta["sampling_rate_hz"]),
        channel_names=meta["channel_names"],
        data=raw.reshape(n_ch, -1).astype(np.float64),
        age_years=None if meta.get("age_years") is None else float(meta["age_years"]),
    )


def iter_bundles(root: str | Path) -> list[Path]:
    """All bundle directories below ``root``, sorted by path."""
    return sorted(p.parent for p in Path(root).rglob("meta.json"))


def bundle_name(rec: Recording) -> str:
    return f"{rec.subject_id}_{rec.state}"


# ---------------------------------------------------------------------------
# montage and regions

@dataclass
class Montage:
    channel_names: list[str]
    positions: np.ndarray  # (n_channels, 3) on the unit sphere

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if len(set(self.channel_names)) != len(self.channel_names):
            raise SignalError("montage channel names must be unique")
        if self.positions.shape != (len(self.channel_names), 3):
            raise SignalError("positions must be (n_channels, 3)")
        norms = np.linalg.norm(self.positions, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise SignalError("montage positions must lie on the unit sphere")

    def position(self, names: Sequence[str]) -> np.ndarray:
        lookup = {n: i for i, n in enumerate(self.channel_names)}
        try:
            return self.positions[[lookup[n] for n in names]]
        except KeyError as exc:
            raise SignalError(f"channel {exc.args[0]!r} not in montage") from None

    def to_json(self) -> dict:
        return {"channel_names": self.channel_names, "positions": self.positions.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "Montage":
        return cls(list(obj["channel_names"]), np.asarray(obj["positions"]))

    @classmethod
    def load(cls, path: str | Path) -> "Montage":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")


@dataclass
class RegionMap:
    regions: list[tuple[str, list[str]]] = field(default_factory=list)

    def __post_init__(self):
        self.regions = [(str(n), list(m)) for n, m in self.regions]
        seen: set[str] = set()
        for name, members in self.regions:
            if "_" in name:
                raise SignalError(f"region name {name!r} may not contain '_'")
            if not members:
                raise SignalError(f"region {name!r} has no members")
            overlap = seen.intersection(members)
            if overlap:
                raise SignalError(f"channels {sorted(overlap)} belong to more than one region")
            seen.update(members)

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.regions]

    def region_of(self) -> dict[str, str]:
        return {ch: name for name, members in self.regions for ch in members}

    def validate(self, montage: Montage) -> None:
        known = set(montage.channel_names)
        for name, members in self.regions:
            missing = [m for m in members if m not in known]
            if missing:
                raise SignalError(f"region {name!r}: channels {missing} not in montage")

    def centroids(self, montage: Montage) -> dict[str, np.ndarray]:
        out = {}
        for name, members in self.regions:
            c = montage.position(members).mean(axis=0)
            out[name] = c / np.linalg.norm(c)
        return out

    def to_json(self) -> dict:
        return {"regions": [{"name": n, "channels": m} for n, m in self.regions]}

    @classmethod
    def from_json(cls, obj: dict) -> "RegionMap":
        return cls([(r["name"], r["channels"]) for r in obj["regions"]])

    @classmethod
    def load(cls, path: str | Path) -> "RegionMap":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")


def hemisphere_montage(n_channels: int = 128, prefix: str = "E") -> Montage:
    """Evenly spread electrodes over the upper hemisphere (Fibonacci lattice).

    Axes: x to the right ear, y to the nose, z to the vertex.
    """
    i = np.arange(n_channels) + 0.5
    z = 1.0 - i / n_channels  # uniform in z over (0, 1] -> uniform area
    r = np.sqrt(1.0 - z**2)
    golden = math.pi * (3.0 - math.sqrt(5.0))
    theta = golden * i
    pos = np.column_stack([r * np.cos(theta), r * np.sin(theta), z])
    pos /= np.linalg.norm(pos, axis=1, keepdims=True)
    return Montage([f"{prefix}{k + 1}" for k in range(n_channels)], pos)


_OUTER_SECTORS = ("Frontal", "Temporal", "Parietal", "Occipital")
_INNER_SECTORS = ("CentralAnt", "CentralPost")


def sector_region_map(montage: Montage, inner_cap_deg: float = 48.19) -> RegionMap:
    """Partition a montage into 12 scalp regions by angular sector.

    Electrodes within ``inner_cap_deg`` of the vertex form four central
    regions (anterior/posterior x left/right); the rest of the scalp is split
    into four 45-degree azimuth sectors per hemisphere. The default cap angle
    puts a third of a uniform hemisphere in the central regions.
    """
    regions: dict[str, list[str]] = {}
    names = []
    for sector in _OUTER_SECTORS + _INNER_SECTORS:
        for side in ("L", "R"):
            names.append(sector + side)
            regions[sector + side] = []
    cos_cap = math.cos(math.radians(inner_cap_deg))
    for ch, (x, y, z) in zip(montage.channel_names, montage.positions):
        side = "R" if x >= 0 else "L"
        if z >= cos_cap:
            sector = "CentralAnt" if y >= 0 else "CentralPost"
        else:
            az = math.degrees(math.atan2(abs(x), y))  # 0 at the nose, 180 at the inion
            sector = _OUTER_SECTORS[min(int(az // 45.0), 3)]
        regions[sector + side].append(ch)
    return RegionMap([(n, regions[n]) for n in names if regions[n]])


def default_montage() -> Montage:
    """The bundled 128-electrode montage (``data/montage_128.json``)."""
    return Montage.from_json(json.loads(resources.files("brainage").joinpath("data/montage_128.json").read_text()))


def default_region_map() -> RegionMap:
    """The bundled 12-region map (``data/regions_12.json``)."""
    return RegionMap.from_json(json.loads(resources.files("brainage").joinpath("data/regions_12.json").read_text()))


# ---------------------------------------------------------------------------
# filtering and resampling

def resample(rec: Recording, target_rate_hz: float) -> Recording:
    """Polyphase resampling with the built-in anti-alias FIR.

    Output length is ``floor(n_samples * target / source)``.
    """
    src = float(rec.sampling_rate_hz)
    if target_rate_hz <= 0:
        raise SignalError("target rate must be positive")
    if target_rate_hz > src:
        raise SignalError(f"upsampling {src} Hz -> {target_rate_hz} Hz is not supported")
    if target_rate_hz == src:
        return rec.replace(data=rec.data.copy())
    ratio = Fraction(target_rate_hz / src).limit_denominator(1000)
    out = sp_signal.resample_poly(rec.data, ratio.numerator, ratio.denominator, axis=1)
    n_out = int(math.floor(rec.n_samples * target_rate_hz / src))
    return rec.replace(data=out[:, :n_out], sampling_rate_hz=float(target_rate_hz))


def _check_band(lo_hz: float, hi_hz: float, rate: float) -> None:
    if not (0 < lo_hz < hi_hz < rate / 2):
        raise SignalError(f"invalid band {lo_hz}-{hi_hz} Hz at {rate} Hz sampling")


def bandpass_sos(lo_hz: float, hi_hz: float, rate: float, order: int = 4) -> np.ndarray:
    _check_band(lo_hz, hi_hz, rate)
    return sp_signal.butter(order, [lo_hz, hi_hz], btype="bandpass", output="sos", fs=rate)


def bandpass_array(data: np.ndarray, lo_hz: float, hi_hz: float, rate: float, order: int = 4) -> np.ndarray:
    """Forward-backward Butterworth band-pass along the last axis."""
    sos = bandpass_sos(lo_hz, hi_hz, rate, order)
    return sp_signal.sosfiltfilt(sos, data, axis=-1)


def bandpass_zero_phase(rec: Recording, lo_hz: float, hi_hz: float, order: int = 4) -> Recording:
    return rec.replace(data=bandpass_array(rec.data, lo_hz, hi_hz, rec.sampling_rate_hz, order))


# ---------------------------------------------------------------------------
# epochs

@dataclass
class EpochSet:
    subject_id: str
    state: str
    sampling_rate_hz: float
    channel_names: list[str]
    epoch_duration_s: float
    epochs: np.ndarray  # (n_epochs, n_channels, n_epoch_samples)
    age_years: float | None = None

    def __len__(self) -> int:
        return self.epochs.shape[0]


def epoch_samples(duration_s: float, rate: float) -> int:
    return int(round(duration_s * rate))


def epoch_array(data: np.ndarray, n_per: int) -> np.ndarray:
    """Cut ``(n_channels, n_samples)`` into ``(n_epochs, n_channels, n_per)``."""
    n_ep = data.shape[-1] // n_per
    if n_ep < 1:
        raise SignalError(f"recording of {data.shape[-1]} samples is shorter than one epoch ({n_per})")
    trimmed = data[:, : n_ep * n_per]
    return trimmed.reshape(data.shape[0], n_ep, n_per).transpose(1, 0, 2)


def epoch(rec: Recording, duration_s: float) -> EpochSet:
    if duration_s <= 0:
        raise SignalError("epoch duration must be positive")
    n_per = epoch_samples(duration_s, rec.sampling_rate_hz)
    return EpochSet(
        subject_id=rec.subject_id,
        state=rec.state,
        sampling_rate_hz=rec.sampling_rate_hz,
        channel_names=list(rec.channel_names),
        epoch_duration_s=duration_s,
        epochs=epoch_array(rec.data, n_per),
        age_years=rec.age_years,
    )


# ---------------------------------------------------------------------------
# RANSAC channel rejection

@dataclass
class RansacParams:
    n_resample: int = 50
    sample_fraction: float = 0.25
    corr_threshold: float = 0.75
    unbroken_fraction: float = 0.4
    epoch_duration_s: float = 1.0
    n_neighbors: int = 4


def idw_weights(target_pos: np.ndarray, source_pos: np.ndarray, n_neighbors: int = 4) -> np.ndarray:
    """Inverse-squared-distance weights over the nearest source electrodes.

    Returns a ``(n_target, n_source)`` row-stochastic matrix.
    """
    chord = np.linalg.norm(target_pos[:, None, :] - source_pos[None, :, :], axis=-1)
    k = min(n_neighbors, source_pos.shape[0])
    nearest = np.argsort(chord, axis=1, kind="stable")[:, :k]
    d = np.take_along_axis(chord, nearest, axis=1)
    w = 1.0 / np.maximum(d, 1e-9) ** 2
    w /= w.sum(axis=1, keepdims=True)
    out = np.zeros_like(chord)
    np.put_along_axis(out, nearest, w, axis=1)
    return out


def _corr_from_moments(cross: np.ndarray, var_a: np.ndarray, var_b: np.ndarray) -> np.ndarray:
    """Correlation from centred cross and auto products."""
    a_flat = var_a <= 1e-12 * np.maximum(var_a.max(initial=0.0), 1e-300)
    b_flat = var_b <= 1e-12 * np.maximum(var_b.max(initial=0.0), 1e-300)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = cross / np.sqrt(var_a * var_b)
    # two flat signals agree perfectly; one flat signal cannot be predicted
    return np.where(a_flat | b_flat, np.where(a_flat & b_flat, 1.0, 0.0), np.clip(r, -1.0, 1.0))


def ransac_reject(
    rec: Recording,
    montage: Montage,
    params: RansacParams | None = None,
    seed: int = 0,
) -> set[str]:
    """Flag channels that their spatial neighbours fail to predict.

    For every 1 s epoch and each of ``n_resample`` rounds, a random quarter of
    the channels predicts the others by inverse-distance weighting. A channel
    is flagged in an epoch when the median correlation between its signal and
    its predictions falls below ``corr_threshold``, and rejected when flagged
    in more than ``unbroken_fraction`` of the epochs.
    """
    p = params or RansacParams()
    n_ch = len(rec.channel_names)
    if n_ch < 8:
        raise SignalError(f"RANSAC needs at least 8 channels, got {n_ch}")
    # canonical channel order makes the result independent of input ordering
    order = sorted(range(n_ch), key=lambda i: rec.channel_names[i])
    names = [rec.channel_names[i] for i in order]
    data = rec.data[order]
    pos = montage.position(names)
    epochs = epoch_array(data, epoch_samples(p.epoch_duration_s, rec.sampling_rate_hz))
    n_ep = epochs.shape[0]
    n_pick = max(p.n_neighbors, int(math.ceil(p.sample_fraction * n_ch)))
    # IDW predictions are linear in the picked channels, so every correlation
    # follows from the per-epoch Gram matrix of the centred signals
    centred = epochs - epochs.mean(axis=-1, keepdims=True)
    gram = np.einsum("ect,edt->ecd", centred, centred, optimize=True)
    power = np.einsum("ecc->ec", gram)
    rng = np.random.default_rng(seed)
    corr = np.full((p.n_resample, n_ep, n_ch), np.nan)
    for r in range(p.n_resample):
        picked = np.sort(rng.choice(n_ch, size=n_pick, replace=False))
        rest = np.setdiff1d(np.arange(n_ch), picked)
        w = idw_weights(pos[rest], pos[picked], p.n_neighbors)
        num = np.einsum("ts,ets->et", w, gram[:, rest][:, :, picked])
        pred_power = np.einsum("ts,esu,tu->et", w, gram[:, picked][:, :, picked], w, optimize=True)
        corr[r][:, rest] = _corr_from_moments(num, power[:, rest], pred_power)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN slices: channel never predicted
        med = np.nanmedian(corr, axis=0)  # (n_ep, n_ch)
    flagged = np.where(np.isnan(med), False, med < p.corr_threshold)
    frac = flagged.mean(axis=0)
    return {names[i] for i in np.flatnonzero(frac > p.unbroken_fraction)}


def exclude_recording(rejected: Iterable[str], max_rejected: int = 30) -> bool:
    return len(set(rejected)) > max_rejected


def global_drop(rejection_counts: dict[str, int], n_recordings: int, max_fraction: float = 0.125) -> set[str]:
    """Channels rejected in more than ``max_fraction`` of all recordings."""
    if n_recordings <= 0:
        return set()
    return {ch for ch, c in rejection_counts.items() if c / n_recordings > max_fraction}


def interpolate_channels(rec: Recording, montage: Montage, bads: Iterable[str], n_neighbors: int = 4) -> Recording:
    """Replace ``bads`` by inverse-distance interpolation from good channels."""
    bads = [b for b in rec.channel_names if b in set(bads)]
    if not bads:
        return rec.replace(data=rec.data.copy())
    goods = [c for c in rec.channel_names if c not in set(bads)]
    if len(goods) < 1:
        raise SignalError("cannot interpolate: every channel is bad")
    w = idw_weights(montage.position(bads), montage.position(goods), n_neighbors)
    data = rec.data.copy()
    gi = [rec.channel_names.index(c) for c in goods]
    bi = [rec.channel_names.index(c) for c in bads]
    data[bi] = w @ rec.data[gi]
    return rec.replace(data=data)


# ---------------------------------------------------------------------------
# regions

def combine_regions(rec: Recording, region_map: RegionMap) -> Recording:
    """One channel per region: the sample-wise mean of its member channels."""
    lookup = {n: i for i, n in enumerate(rec.channel_names)}
    rows = []
    for name, members in region_map.regions:
        missing = [m for m in members if m not in lookup]
        if missing:
            raise SignalError(f"region {name!r}: channels {missing} missing from recording")
        rows.append(rec.data[[lookup[m] for m in members]].mean(axis=0))
    return rec.replace(channel_names=region_map.names, data=np.vstack(rows))


# ---------------------------------------------------------------------------
# preprocessing chain

@dataclass
class PreprocessParams:
    target_rate_hz: float = 250.0
    lo_hz: float = 0.5
    hi_hz: float = 50.0
    ransac: bool = True
    max_rejected: int = 30
    drop_channels: tuple[str, ...] = ()
    ransac_params: RansacParams = field(default_factory=RansacParams)


@dataclass
class PreprocessResult:
    recording: Recording | None
    rejected: set[str]
    excluded: bool


def preprocess_recording(rec: Recording, montage: Montage, params: PreprocessParams, seed: int) -> PreprocessResult:
    """Resample, band-pass, reject noisy channels and interpolate them back."""
    missing = [c for c in rec.channel_names if c not in set(montage.channel_names)]
    if missing:
        raise SignalError(f"channels {missing[:5]} not found in montage")
    out = resample(rec, params.target_rate_hz) if rec.sampling_rate_hz != params.target_rate_hz else rec
    hi = min(params.hi_hz, out.sampling_rate_hz / 2 * 0.99)
    out = bandpass_zero_phase(out, params.lo_hz, hi)
    rejected: set[str] = set()
    if params.ransac:
        rejected = ransac_reject(out, montage, params.ransac_params, seed=seed)
    if exclude_recording(rejected, params.max_rejected):
        log.info("excluding %s/%s: %d channels rejected", rec.subject_id, rec.state, len(rejected))
        return PreprocessResult(None, rejected, True)
    bads = rejected | set(params.drop_channels)
    if bads:
        out = interpolate_channels(out, montage, bads)
    return PreprocessResult(out, rejected, False)
