"""The fixed measure catalogue and column descriptors."""
from __future__ import annotations

from dataclasses import dataclass

from .measures import BANDS

BAND_NAMES: tuple[str, ...] = tuple(BANDS)

# (measure id, component names); one-component measures use an empty name
MEASURES: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("mean", ("",)),
    ("std", ("",)),
    ("ptp_amp", ("",)),
    ("line_length", ("",)),
    ("zero_crossings", ("",)),
    ("skewness", ("",)),
    ("kurtosis", ("",)),
    ("hjorth_complexity", ("",)),
    ("spect_slope", ("intercept", "slope", "mse", "r2")),
    ("pow_freq_bands", ("",)),
    ("wavelet_coef_energy", ("",)),
    ("hjorth_complexity_spect", ("",)),
    ("quantile", ("q05", "q25", "q75", "q95")),
    ("higuchi_fd", ("",)),
    ("samp_entropy", ("",)),
    ("app_entropy", ("",)),
    ("spect_entropy", ("",)),
    ("svd_fisher_info", ("",)),
    ("hurst_exp", ("",)),
)
MEASURE_NAMES: tuple[str, ...] = tuple(m for m, _ in MEASURES)

# measures computed once on the whole-spectrum signal and indexed by band
BAND_INDEXED = frozenset({"pow_freq_bands", "wavelet_coef_energy"})

STATE_ORDER: tuple[str, ...] = ("EC", "EO")


@dataclass(frozen=True, order=True)
class FeatureDescriptor:
    state: str
    channel: str
    band: str
    measure: str
    component: str = ""

    @property
    def name(self) -> str:
        m = f"{self.measure}.{self.component}" if self.component else self.measure
        return f"{self.state}_{self.channel}_{self.band}_{m}"

    @classmethod
    def parse(cls, name: str) -> "FeatureDescriptor":
        try:
            state, channel, band, measure = name.split("_", 3)
        except ValueError:
            raise ValueError(f"malformed feature column {name!r}") from None
        measure, _, component = measure.partition(".")
        if measure not in MEASURE_NAMES or band not in BAND_NAMES:
            raise ValueError(f"unknown measure or band in column {name!r}")
        return cls(state, channel, band, measure, component)


def channel_columns(state: str, channel: str) -> list[FeatureDescriptor]:
    """Descriptors for one (state, channel) block in canonical order."""
    if "_" in channel:
        raise ValueError(f"channel name {channel!r} may not contain '_'")
    out = []
    for band in BAND_NAMES:
        for measure, comps in MEASURES:
            for comp in comps:
                out.append(FeatureDescriptor(state, channel, band, measure, comp))
    return out


def columns_for(states, channels) -> list[FeatureDescriptor]:
    states = [s for s in STATE_ORDER if s in set(states)]
    return [d for s in states for ch in channels for d in channel_columns(s, ch)]


PER_CHANNEL = len(channel_columns("EC", "X"))
