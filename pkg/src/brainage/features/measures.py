"""Univariate EEG measures.

Every function accepts a single signal ``(n,)`` or a batch ``(..., n)`` and
reduces the last axis. Degenerate inputs (zero variance) produce 0 for the
affected measures and emit :class:`DegenerateSignalWarning`.
"""
from __future__ import annotations

import math
import warnings

import numba
import numpy as np
import pywt
from scipy import signal as sp_signal

# name -> (lo_hz, hi_hz)
BANDS: dict[str, tuple[float, float]] = {
    "delta": (0.5, 4.0),
    "theta": (4.0, 7.0),
    "alpha": (7.0, 14.0),
    "beta": (14.0, 30.0),
    "omega": (0.5, 30.0),
}

WELCH_NPERSEG = 256


class DegenerateSignalWarning(UserWarning):
    pass


class FeatureError(ValueError):
    pass


def _warn_degenerate(mask: np.ndarray, what: str) -> None:
    n = int(np.count_nonzero(mask))
    if n:
        warnings.warn(f"{n} zero-variance signal(s) in {what}; returning 0", DegenerateSignalWarning, stacklevel=3)


def _as_batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        raise FeatureError("expected a signal, got a scalar")
    return x, x.ndim == 1


# ---------------------------------------------------------------------------
# time domain

def hjorth_mobility(x: np.ndarray) -> np.ndarray:
    dx = np.diff(x, axis=-1)
    v, dv = x.var(axis=-1), dx.var(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(v > 0, np.sqrt(dv / np.where(v > 0, v, 1.0)), 0.0)


def hjorth_complexity(x: np.ndarray) -> np.ndarray:
    """mobility(diff(x)) / mobility(x); 0 where either mobility vanishes."""
    x = np.asarray(x, dtype=np.float64)
    m = hjorth_mobility(x)
    md = hjorth_mobility(np.diff(x, axis=-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(m > 0, md / np.where(m > 0, m, 1.0), 0.0)


def zero_crossings(x: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Sign changes, where each run of (numerically) zero samples counts once.

    Samples with ``|x| <= rtol * max|x|`` are treated as exact zeros, which
    keeps the count invariant under positive rescaling.
    """
    x = np.asarray(x, dtype=np.float64)
    scale = np.abs(x).max(axis=-1, keepdims=True)
    s = np.sign(np.where(np.abs(x) <= rtol * scale, 0.0, x))
    strict = np.count_nonzero(s[..., :-1] * s[..., 1:] < 0, axis=-1)
    z = (s == 0).astype(np.int8)
    run_starts = np.count_nonzero(np.diff(z, axis=-1) == 1, axis=-1) + z[..., 0]
    # an all-zero signal is flat, not crossing
    run_starts = np.where(scale[..., 0] == 0, 0, run_starts)
    return (strict + run_starts).astype(np.float64)


def temporal_features(x) -> np.ndarray:
    """mean, std, peak-to-peak, line length, zero crossings, skewness,
    Pearson kurtosis (normal = 3) and Hjorth complexity."""
    x, single = _as_batch(x)
    if x.shape[-1] < 3:
        raise FeatureError("temporal features need at least 3 samples")
    mean = x.mean(axis=-1)
    c = x - mean[..., None]
    m2 = (c**2).mean(axis=-1)
    std = np.sqrt(m2)
    degen = m2 <= 0
    _warn_degenerate(degen, "temporal_features")
    safe = np.where(degen, 1.0, m2)
    skew = np.where(degen, 0.0, (c**3).mean(axis=-1) / safe**1.5)
    kurt = np.where(degen, 0.0, (c**4).mean(axis=-1) / safe**2)
    out = np.stack(
        [
            mean,
            std,
            np.ptp(x, axis=-1),
            np.abs(np.diff(x, axis=-1)).sum(axis=-1),
            zero_crossings(x),
            skew,
            kurt,
            hjorth_complexity(x),
        ],
        axis=-1,
    )
    return out[0] if single and out.ndim > 1 else out


def quantile_features(x, q=(0.05, 0.25, 0.75, 0.95)) -> np.ndarray:
    x, _ = _as_batch(x)
    if x.shape[-1] == 0:
        raise FeatureError("quantiles of an empty signal")
    return np.moveaxis(np.quantile(x, q, axis=-1), 0, -1)


# ---------------------------------------------------------------------------
# spectral

def welch(x, rate: float, nfft: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Hann-windowed Welch PSD, 256-sample segments with 50% overlap."""
    x = np.asarray(x, dtype=np.float64)
    nperseg = min(WELCH_NPERSEG, x.shape[-1])
    nfft = max(nperseg, nfft or nperseg)
    return sp_signal.welch(
        x, fs=rate, window="hann", nperseg=nperseg, noverlap=nperseg // 2, nfft=nfft, axis=-1
    )


def _nfft_for_band(n: int, rate: float, lo: float, hi: float, min_bins: int = 8) -> int:
    """Smallest power-of-two FFT length giving ``min_bins`` bins inside [lo, hi]."""
    nfft = min(WELCH_NPERSEG, n)
    while True:
        df = rate / nfft
        n_in = math.floor(hi / df) - math.ceil(lo / df) + 1
        if n_in >= min_bins:
            return nfft
        nfft *= 2


def psd_regression_features(x, rate: float, band: tuple[float, float] | None = None) -> np.ndarray:
    """Least-squares line through log10 PSD vs log10 frequency.

    Returns intercept, slope, mean squared residual and R^2. Short segments
    are zero-padded so at least 8 frequency bins fall inside ``band``.
    """
    x, _ = _as_batch(x)
    lo, hi = band if band is not None else (0.5, rate / 2)
    nfft = _nfft_for_band(x.shape[-1], rate, lo, hi)
    f, p = welch(x, rate, nfft=nfft)
    sel = (f >= lo) & (f <= hi) & (f > 0)
    p = p[..., sel]
    if np.any(p <= 0):
        raise FeatureError("PSD has non-positive values in the fit range (zero signal?)")
    lx = np.log10(f[sel])
    ly = np.log10(p)
    lx_c = lx - lx.mean()
    sxx = (lx_c**2).sum()
    slope = (ly * lx_c).sum(axis=-1) / sxx
    intercept = ly.mean(axis=-1) - slope * lx.mean()
    resid = ly - (intercept[..., None] + slope[..., None] * lx)
    mse = (resid**2).mean(axis=-1)
    sst = ((ly - ly.mean(axis=-1, keepdims=True)) ** 2).sum(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(sst > 0, 1.0 - (resid**2).sum(axis=-1) / np.where(sst > 0, sst, 1.0), 1.0)
    return np.stack([intercept, slope, mse, r2], axis=-1)


def band_powers(x, rate: float, bands: dict[str, tuple[float, float]] | None = None) -> np.ndarray:
    """Welch PSD summed over bins with lo <= f < hi, times the bin width."""
    bands = bands or BANDS
    f, p = welch(x, rate)
    df = f[1] - f[0]
    cols = [p[..., (f >= lo) & (f < hi)].sum(axis=-1) * df for lo, hi in bands.values()]
    return np.stack(cols, axis=-1)


def spectral_entropy(x, rate: float) -> np.ndarray:
    """Shannon entropy of the normalised Welch PSD divided by log(#bins)."""
    f, p = welch(x, rate)
    total = p.sum(axis=-1, keepdims=True)
    degen = total[..., 0] <= 0
    _warn_degenerate(degen, "spectral_entropy")
    pn = p / np.where(total > 0, total, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(pn > 0, pn * np.log(pn), 0.0).sum(axis=-1)
    return np.where(degen, 0.0, h / math.log(p.shape[-1]))


def spectral_hjorth_complexity(x, rate: float) -> np.ndarray:
    """Hjorth complexity of the PSD treated as a sequence over frequency."""
    _, p = welch(x, rate)
    return hjorth_complexity(p)


# ---------------------------------------------------------------------------
# wavelets

WAVELET = "db4"


def wavelet_levels(rate: float, lowest_hz: float = 4.0) -> int:
    """Decomposition depth whose approximation band tops out near ``lowest_hz``."""
    return max(1, int(round(math.log2(rate / 2 / lowest_hz))))


def wavelet_energies(x, rate: float, level: int | None = None) -> np.ndarray:
    """Energy of db4 coefficients mapped onto (delta, theta, alpha, beta, omega).

    The signal is zero-padded to a multiple of ``2**level`` and transformed
    with periodic boundary handling, so the transform is orthogonal and the
    level energies sum to the signal energy. Each catalogue band takes the
    level whose dyadic band centre lies closest on a log scale; omega is the
    total energy over all levels.
    """
    x, single = _as_batch(x)
    filt_len = pywt.Wavelet(WAVELET).dec_len
    if x.shape[-1] < filt_len:
        raise FeatureError(f"signal shorter than the {WAVELET} filter support ({filt_len})")
    level = level or wavelet_levels(rate)
    block = 2**level
    pad = (-x.shape[-1]) % block
    xp = np.pad(x, [(0, 0)] * (x.ndim - 1) + [(0, pad)])
    coeffs = pywt.wavedec(xp, WAVELET, mode="periodization", level=level, axis=-1)
    energies = [np.sum(c**2, axis=-1) for c in coeffs]  # [A_L, D_L, ..., D_1]
    # frequency band centre of each entry
    centres = [rate / 2 ** (level + 2)] + [3 * rate / 2 ** (j + 2) for j in range(level, 0, -1)]
    log_c = np.log(centres)
    out = []
    for name in ("delta", "theta", "alpha", "beta"):
        lo, hi = BANDS[name]
        k = int(np.argmin(np.abs(log_c - math.log(math.sqrt(lo * hi)))))
        out.append(energies[k])
    out.append(np.sum(energies, axis=0))
    res = np.stack(out, axis=-1)
    return res


def wavelet_level_energies(x, rate: float, level: int | None = None) -> list[np.ndarray]:
    """Raw per-level energies ``[A_L, D_L, ..., D_1]`` (for the Parseval check)."""
    x, _ = _as_batch(x)
    level = level or wavelet_levels(rate)
    pad = (-x.shape[-1]) % 2**level
    xp = np.pad(x, [(0, 0)] * (x.ndim - 1) + [(0, pad)])
    return [np.sum(c**2, axis=-1) for c in pywt.wavedec(xp, WAVELET, mode="periodization", level=level, axis=-1)]


# ---------------------------------------------------------------------------
# entropy

def _embed(x: np.ndarray, dim: int, delay: int = 1) -> np.ndarray:
    n = x.shape[-1] - (dim - 1) * delay
    idx = np.arange(dim)[None, :] * delay + np.arange(n)[:, None]
    return x[..., idx]


@numba.njit(cache=True)
def _template_matches(x, m, r):
    """Chebyshev template matches for sample and approximate entropy.

    Templates are visited in order of their first sample so the inner scan
    stops as soon as that coordinate alone exceeds ``r``.
    """
    n = x.size
    nt = n - m + 1
    order = np.argsort(x[:nt], kind="mergesort")
    c_m = np.ones(nt)
    c_m1 = np.ones(n - m)
    a = 0
    b = 0
    for p in range(nt):
        i = order[p]
        for q in range(p + 1, nt):
            j = order[q]
            if x[j] - x[i] > r:
                break
            ok = True
            for k in range(1, m):
                if abs(x[i + k] - x[j + k]) > r:
                    ok = False
                    break
            if not ok:
                continue
            c_m[i] += 1
            c_m[j] += 1
            if i < n - m and j < n - m:
                b += 1
                if abs(x[i + m] - x[j + m]) <= r:
                    a += 1
                    c_m1[i] += 1
                    c_m1[j] += 1
    return c_m, c_m1, a, b


def sample_approx_entropy(x: np.ndarray, m: int = 2, r: float | None = None) -> tuple[float, float]:
    """(sample entropy, approximate entropy) of one signal."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if r is None:
        r = 0.2 * x.std()
    c_m, c_m1, a, b = _template_matches(x, m, r)
    if a > 0 and b > 0:
        sampen = -math.log(a / b)
    else:
        # no matches: report the largest value the estimator can resolve
        k = x.size - m
        sampen = math.log(k * (k - 1) / 2)
    apen = float(np.mean(np.log(c_m / c_m.size)) - np.mean(np.log(c_m1 / c_m1.size)))
    return sampen, apen


def entropy_features(x, rate: float, m: int = 2, r_factor: float = 0.2) -> np.ndarray:
    """Sample entropy, approximate entropy (Chebyshev, r = r_factor * std)
    and normalised spectral entropy."""
    x, single = _as_batch(x)
    if x.shape[-1] < 100:
        raise FeatureError("sample/approximate entropy need at least 100 samples")
    flat = x.reshape(-1, x.shape[-1])
    sd = flat.std(axis=-1)
    degen = sd <= 0
    _warn_degenerate(degen, "entropy_features")
    se = np.zeros(len(flat))
    ae = np.zeros(len(flat))
    for i in np.flatnonzero(~degen):
        se[i], ae[i] = sample_approx_entropy(flat[i], m, r_factor * sd[i])
    spec = spectral_entropy(flat, rate)
    out = np.stack([se, ae, spec], axis=-1).reshape(x.shape[:-1] + (3,))
    return out


# ---------------------------------------------------------------------------
# complexity

def higuchi_fd(x, k_max: int = 10) -> np.ndarray:
    """Higuchi fractal dimension: slope of log L(k) against log(1/k)."""
    x, _ = _as_batch(x)
    n = x.shape[-1]
    ks = np.arange(1, k_max + 1)
    log_l = []
    for k in ks:
        lengths = []
        for m0 in range(k):
            seg = x[..., m0::k]
            n_m = seg.shape[-1] - 1
            if n_m < 1:
                continue
            curve = np.abs(np.diff(seg, axis=-1)).sum(axis=-1) * (n - 1) / (n_m * k) / k
            lengths.append(curve)
        log_l.append(np.log(np.maximum(np.mean(lengths, axis=0), np.finfo(float).tiny)))
    log_l = np.stack(log_l, axis=-1)
    lx = np.log(1.0 / ks)
    lx_c = lx - lx.mean()
    slope = (log_l * lx_c).sum(axis=-1) / (lx_c**2).sum()
    flat = np.ptp(x, axis=-1) == 0
    return np.where(flat, 0.0, slope)


def svd_fisher_info(x, dim: int = 10, delay: int = 2) -> np.ndarray:
    """Fisher information of the normalised singular spectrum of the delay embedding."""
    x, _ = _as_batch(x)
    emb = _embed(x, dim, delay)
    s = np.linalg.svd(emb, compute_uv=False)
    total = s.sum(axis=-1, keepdims=True)
    sn = s / np.where(total > 0, total, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(sn[..., :-1] > 0, np.diff(sn, axis=-1) ** 2 / sn[..., :-1], 0.0)
    return terms.sum(axis=-1)


def hurst_exponent(x, n_windows: int = 10, min_window: int = 16) -> np.ndarray:
    """Rescaled-range Hurst exponent over log-spaced window sizes."""
    x, _ = _as_batch(x)
    n = x.shape[-1]
    sizes = np.unique(np.floor(np.logspace(np.log10(min_window), np.log10(n // 2), n_windows)).astype(int))
    if len(sizes) < 2:
        raise FeatureError("signal too short for a rescaled-range fit")
    log_rs = []
    for w in sizes:
        k = n // w
        seg = x[..., : k * w].reshape(x.shape[:-1] + (k, w))
        dev = np.cumsum(seg - seg.mean(axis=-1, keepdims=True), axis=-1)
        r = dev.max(axis=-1) - dev.min(axis=-1)
        s = seg.std(axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            rs = np.where(s > 0, r / np.where(s > 0, s, 1.0), np.nan)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            mean_rs = np.nanmean(rs, axis=-1)
        log_rs.append(np.log(np.where(np.isfinite(mean_rs) & (mean_rs > 0), mean_rs, 1.0)))
    log_rs = np.stack(log_rs, axis=-1)
    lx = np.log(sizes)
    lx_c = lx - lx.mean()
    h = (log_rs * lx_c).sum(axis=-1) / (lx_c**2).sum()
    flat = x.std(axis=-1) == 0
    return np.where(flat, 0.0, h)


def complexity_features(x, rate: float, k_max: int = 10) -> np.ndarray:
    """Higuchi FD, spectral Hjorth complexity, SVD Fisher information, Hurst exponent."""
    x, _ = _as_batch(x)
    if x.shape[-1] < 256:
        raise FeatureError("complexity features need at least 256 samples")
    degen = x.std(axis=-1) == 0
    _warn_degenerate(degen, "complexity_features")
    return np.stack(
        [higuchi_fd(x, k_max), spectral_hjorth_complexity(x, rate), svd_fisher_info(x), hurst_exponent(x)],
        axis=-1,
    )
