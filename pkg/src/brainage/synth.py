"""Synthetic resting-state corpus with planted age effects.

Each subject's scalp signal is a smooth spatial mixture of a few latent
sources plus weak sensor noise. Every source carries aperiodic 1/f^beta
noise and narrow-band oscillators in the delta, theta, alpha and beta
bands. Age acts through the configured effects: oscillator amplitudes are
affine in normalised age, and the aperiodic exponent can drift with age
around a pivot frequency, which tilts the whole-spectrum PSD slope.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import signal as sig
from ._utils import derive_seed, rng_for, write_json
from .features.measures import BANDS

log = logging.getLogger(__name__)

OSCILLATOR_HZ = {"delta": 2.0, "theta": 5.5, "alpha": 10.0, "beta": 20.0}
PARAMETERS = ("amplitude", "exponent")


@dataclass(frozen=True)
class Effect:
    """One planted age dependence.

    ``parameter="amplitude"`` scales the band's oscillator by
    ``1 + sign * strength * (2 z - 1)`` where z is age normalised to [0, 1].
    ``parameter="exponent"`` (band ``omega``) lowers the aperiodic exponent
    by ``sign * strength * z``, so ``+`` flattens the spectrum with age.
    ``regions`` limits the effect to channels of the named regions; an
    empty tuple means every channel.
    """

    band: str
    parameter: str = "amplitude"
    direction: str = "+"
    strength: float = 0.5
    regions: tuple[str, ...] = ()

    def __post_init__(self):
        if self.band not in BANDS:
            raise ValueError(f"unknown band {self.band!r}")
        if self.parameter not in PARAMETERS:
            raise ValueError(f"parameter must be one of {PARAMETERS}")
        if self.parameter == "amplitude" and self.band not in OSCILLATOR_HZ:
            raise ValueError(f"band {self.band!r} has no oscillator")
        if self.parameter == "exponent" and self.band != "omega":
            raise ValueError("exponent effects act on the whole spectrum (band 'omega')")
        if self.direction not in ("+", "-"):
            raise ValueError("direction must be '+' or '-'")
        if not self.strength >= 0:
            raise ValueError("effect strengths must be non-negative")
        if self.parameter == "amplitude" and self.strength >= 1:
            raise ValueError("amplitude strength must be < 1 to keep amplitudes positive")
        object.__setattr__(self, "regions", tuple(self.regions))

    @property
    def sign(self) -> float:
        return 1.0 if self.direction == "+" else -1.0

    def describe(self) -> str:
        where = ", ".join(self.regions) if self.regions else "all channels"
        if self.parameter == "exponent":
            verb = "flattens" if self.direction == "+" else "steepens"
            return f"aperiodic PSD {verb} with age (exponent change {self.strength:g} over the age range; {where})"
        verb = "increases" if self.direction == "+" else "decreases"
        return f"{self.band} oscillator amplitude {verb} with age (relative change +/-{self.strength:g}; {where})"


def default_effects() -> tuple[Effect, ...]:
    return (
        Effect("delta", "amplitude", "-", 0.6),
        Effect("theta", "amplitude", "-", 0.6),
        Effect("alpha", "amplitude", "+", 0.6),
        Effect("omega", "exponent", "+", 0.8),
    )


@dataclass
class SynthConfig:
    """Generator settings.

    Parameters
    ----------
    n_subjects, age_min, age_max : cohort size and uniform age range in years
    n_channels : electrode count; 128 uses the bundled montage
    sampling_rate_hz : rate of the written recordings
    duration_ec_s, duration_eo_s : recording lengths per state
    effects : planted age dependences
    exponent_base : aperiodic exponent at the youngest age
    pivot_hz : frequency whose aperiodic power does not change with the exponent
    amplitudes : base oscillator RMS per band, relative to the aperiodic RMS
    ec_alpha_gain : extra alpha amplitude factor for eyes-closed recordings
    subject_jitter : log-normal spread of per-subject amplitudes and exponent
    marker_jitter : per-subject spread of each effect's normalised age, drawn
        independently per effect so no single marker determines age
    n_sources, source_width_rad : latent source count and spatial spread
    sensor_noise : independent per-channel white noise, relative RMS
    n_bad_channels : channels per recording replaced by large white noise
    seed : master seed
    """

    n_subjects: int = 100
    age_min: float = 5.0
    age_max: float = 22.0
    n_channels: int = 128
    sampling_rate_hz: float = 500.0
    duration_ec_s: float = 40.0
    duration_eo_s: float = 20.0
    effects: tuple[Effect, ...] = field(default_factory=default_effects)
    exponent_base: float = 2.0
    pivot_hz: float = 20.0
    amplitudes: dict = field(default_factory=lambda: {"delta": 0.6, "theta": 0.6, "alpha": 0.8, "beta": 0.3})
    ec_alpha_gain: float = 2.0
    subject_jitter: float = 0.12
    marker_jitter: float = 0.15
    n_sources: int = 24
    source_width_rad: float = 0.6
    sensor_noise: float = 0.05
    n_bad_channels: int = 1
    seed: int = 0

    def __post_init__(self):
        self.effects = tuple(e if isinstance(e, Effect) else Effect(**e) for e in self.effects)
        if not self.age_max > self.age_min:
            raise ValueError("age range must be non-degenerate")
        if self.age_min < 0:
            raise ValueError("ages must be non-negative")
        if self.n_subjects < 1:
            raise ValueError("n_subjects must be >= 1")
        if self.n_channels < 8:
            raise ValueError("at least 8 channels are required")
        if self.sampling_rate_hz < 2 * max(OSCILLATOR_HZ.values()) * 2:
            raise ValueError("sampling rate too low for the beta oscillator")
        if min(self.duration_ec_s, self.duration_eo_s) <= 0:
            raise ValueError("durations must be positive")
        missing = set(OSCILLATOR_HZ) - set(self.amplitudes)
        if missing:
            raise ValueError(f"missing base amplitudes for {sorted(missing)}")
        if any(v < 0 for v in self.amplitudes.values()) or self.subject_jitter < 0 or self.sensor_noise < 0 \
                or self.marker_jitter < 0:
            raise ValueError("amplitudes and noise levels must be non-negative")
        if not 0 <= self.n_bad_channels < self.n_channels // 4:
            raise ValueError("n_bad_channels must be below a quarter of the channels")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["effects"] = [dict(asdict(e), regions=list(e.regions)) for e in self.effects]
        return d

    @classmethod
    def from_dict(cls, obj: dict) -> "SynthConfig":
        obj = dict(obj)
        if "effects" in obj:
            obj["effects"] = tuple(Effect(**dict(e, regions=tuple(e.get("regions", ())))) for e in obj["effects"])
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown synth settings {sorted(unknown)}")
        return cls(**obj)

    def montage(self) -> sig.Montage:
        return sig.default_montage() if self.n_channels == 128 else sig.hemisphere_montage(self.n_channels)

    def region_map(self) -> sig.RegionMap:
        return sig.default_region_map() if self.n_channels == 128 else sig.sector_region_map(self.montage())

    def normalized_age(self, age: float) -> float:
        return (age - self.age_min) / (self.age_max - self.age_min)


# ---------------------------------------------------------------------------
# signal pieces

def colored_noise(rng: np.random.Generator, n_rows: int, n: int, rate: float, exponent: np.ndarray,
                  pivot_hz: float) -> np.ndarray:
    """Gaussian noise whose PSD follows (f / pivot)^-exponent, one exponent per row.

    Shaped in the frequency domain; the DC bin is zeroed so rows are
    zero-mean, and rows are scaled so a white-noise input of unit variance
    keeps unit power density at the pivot.
    """
    f = np.fft.rfftfreq(n, 1.0 / rate)
    spec = np.fft.rfft(rng.standard_normal((n_rows, n)), axis=1)
    ratio = np.where(f > 0, f / pivot_hz, 1.0)
    gain = ratio[None, :] ** (-np.asarray(exponent, dtype=np.float64)[:, None] / 2.0)
    gain[:, 0] = 0.0
    return np.fft.irfft(spec * gain, n=n, axis=1)


def aperiodic_rms(n: int, rate: float, exponent: float, pivot_hz: float) -> float:
    """Expected RMS of ``colored_noise`` for one exponent (Parseval over the gains)."""
    f = np.fft.rfftfreq(n, 1.0 / rate)[1:]
    g2 = (f / pivot_hz) ** (-exponent)
    # the Nyquist bin of an even-length transform is counted once, the rest twice
    w = np.full(len(f), 2.0)
    if n % 2 == 0:
        w[-1] = 1.0
    return float(np.sqrt((w * g2).sum() / n))


def narrowband_noise(rng: np.random.Generator, n_rows: int, n: int, rate: float, center_hz: float,
                     width_hz: float) -> np.ndarray:
    """Gaussian-shaped spectral bump around ``center_hz`` with unit RMS per row."""
    f = np.fft.rfftfreq(n, 1.0 / rate)
    spec = np.fft.rfft(rng.standard_normal((n_rows, n)), axis=1)
    out = np.fft.irfft(spec * np.exp(-0.5 * ((f - center_hz) / width_hz) ** 2)[None, :], n=n, axis=1)
    return out / np.sqrt(np.mean(out * out, axis=1, keepdims=True))


def mixing_matrix(montage: sig.Montage, n_sources: int, width_rad: float) -> np.ndarray:
    """(n_channels, n_sources) Gaussian gains on great-circle distance,
    each row normalised to unit energy."""
    src = sig.hemisphere_montage(n_sources).positions
    ang = np.arccos(np.clip(montage.positions @ src.T, -1.0, 1.0))
    g = np.exp(-0.5 * (ang / width_rad) ** 2)
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _effect_mask(effect: Effect, channels: Sequence[str], region_of: dict[str, str]) -> np.ndarray:
    if not effect.regions:
        return np.ones(len(channels), dtype=bool)
    return np.array([region_of.get(c) in set(effect.regions) for c in channels])


def generate_subject(age: float, config: SynthConfig, seed: int, subject_id: str = "sub") -> tuple[sig.Recording, sig.Recording]:
    """Eyes-open and eyes-closed recordings for one subject of the given age."""
    if not config.age_min <= age <= config.age_max:
        raise ValueError(f"age {age} outside [{config.age_min}, {config.age_max}]")
    montage = config.montage()
    channels = montage.channel_names
    region_of = config.region_map().region_of()
    mix = mixing_matrix(montage, config.n_sources, config.source_width_rad)
    n_ch = len(channels)
    z = config.normalized_age(age)
    rate = config.sampling_rate_hz
    subj = rng_for(seed, "subject-traits")

    # per-subject traits shared by both states
    exponent = config.exponent_base + config.subject_jitter * subj.standard_normal()
    amp = {b: np.full(n_ch, a * math.exp(config.subject_jitter * subj.standard_normal()))
           for b, a in config.amplitudes.items()}
    exp_per_channel = np.full(n_ch, exponent)
    for k, e in enumerate(config.effects):
        mask = _effect_mask(e, channels, region_of)
        # each marker ages on its own schedule around the chronological age
        ze = float(np.clip(z + config.marker_jitter * rng_for(seed, "marker", k).standard_normal(), 0.0, 1.0))
        if e.parameter == "amplitude":
            amp[e.band][mask] *= 1.0 + e.sign * e.strength * (2.0 * ze - 1.0)
        else:
            exp_per_channel[mask] -= e.sign * e.strength * ze
    # the aperiodic exponent is a per-source property; channels inherit the
    # mixture-weighted exponent of the sources that dominate them
    w = mix**2
    src_exp = (w.T @ exp_per_channel) / w.sum(axis=0)
    bad_pool = subj.permutation(n_ch)

    recs = {}
    for state, dur in (("EO", config.duration_eo_s), ("EC", config.duration_ec_s)):
        rng = rng_for(seed, "state", state)
        n = int(round(dur * rate))
        aperiodic = colored_noise(rng, config.n_sources, n, rate, src_exp, config.pivot_hz)
        data = mix @ aperiodic / aperiodic_rms(n, rate, config.exponent_base, config.pivot_hz)
        for band, hz in OSCILLATOR_HZ.items():
            osc = mix @ narrowband_noise(rng, config.n_sources, n, rate, hz, 0.15 * hz + 0.3)
            gain = amp[band] * (config.ec_alpha_gain if (band == "alpha" and state == "EC") else 1.0)
            data += gain[:, None] * osc
        data += config.sensor_noise * rng.standard_normal((n_ch, n))
        if config.n_bad_channels:
            bad = np.sort(bad_pool[: config.n_bad_channels] if state == "EC" else bad_pool[-config.n_bad_channels:])
            data[bad] = 5.0 * rng.standard_normal((len(bad), n))
        data -= data.mean(axis=1, keepdims=True)
        recs[state] = sig.Recording(subject_id, state, rate, list(channels), 10.0 * data, float(age))
    return recs["EO"], recs["EC"]


# ---------------------------------------------------------------------------

def subject_ages(config: SynthConfig) -> np.ndarray:
    """Uniform ages rounded to 0.01 years."""
    rng = rng_for(config.seed, "ages")
    return np.round(rng.uniform(config.age_min, config.age_max, size=config.n_subjects), 2)


def manifest(config: SynthConfig) -> dict:
    ages = subject_ages(config)
    return {
        "config": config.to_dict(),
        "subjects": [{"subject_id": f"sub-{i:03d}", "age_years": float(a)} for i, a in enumerate(ages)],
        "effects": [dict(band=e.band, parameter=e.parameter, direction=e.direction, strength=e.strength,
                         regions=list(e.regions), description=e.describe()) for e in config.effects],
    }


def generate_dataset(config: SynthConfig, out_dir: str | Path) -> dict:
    """Write two bundles per subject plus ``manifest.json``, ``montage.json``
    and ``regions.json`` into ``out_dir``; returns the manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    man = manifest(config)
    for i, entry in enumerate(man["subjects"]):
        eo, ec = generate_subject(entry["age_years"], config, derive_seed(config.seed, "subject", i), entry["subject_id"])
        for rec in (eo, ec):
            sig.write_bundle(rec, out_dir / sig.bundle_name(rec))
        log.info("synth %s (age %.2f)", entry["subject_id"], entry["age_years"])
    config.montage().save(out_dir / "montage.json")
    config.region_map().save(out_dir / "regions.json")
    write_json(out_dir / "manifest.json", man)
    return man
