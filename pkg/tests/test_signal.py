import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal as sp_signal

from brainage import signal as sig


def make_rec(data, rate=250.0, names=None, state="EC", sid="s1", age=10.0):
    data = np.atleast_2d(np.asarray(data, dtype=float))
    names = names or [f"E{i + 1}" for i in range(data.shape[0])]
    return sig.Recording(sid, state, rate, names, data, age)


def sine(freq, rate, n, phase=0.0):
    return np.sin(2 * np.pi * freq * np.arange(n) / rate + phase)


def xcorr_lag(a, b):
    c = sp_signal.correlate(b, a, mode="full")
    return int(np.argmax(c)) - (len(a) - 1)


# ---------------------------------------------------------------- recording

def test_recording_invariants():
    with pytest.raises(sig.SignalError):
        make_rec(np.zeros((2, 10)), names=["a"])
    with pytest.raises(sig.SignalError):
        make_rec([[0.0, np.nan]])
    with pytest.raises(sig.SignalError):
        make_rec([[0.0, 1.0]], rate=0)
    with pytest.raises(sig.SignalError):
        sig.Recording("s", "XX", 250.0, ["a"], np.zeros((1, 4)))


def test_bundle_round_trip(tmp_path):
    rec = make_rec(np.random.default_rng(0).normal(size=(3, 100)).astype(np.float32))
    sig.write_bundle(rec, tmp_path / "b")
    meta = json.loads((tmp_path / "b" / "meta.json").read_text())
    assert set(meta) == {"subject_id", "age_years", "state", "sampling_rate_hz", "channel_names"}
    assert (tmp_path / "b" / "data.f32le").stat().st_size == 3 * 100 * 4
    back = sig.read_bundle(tmp_path / "b")
    np.testing.assert_array_equal(back.data, rec.data)
    assert back.channel_names == rec.channel_names and back.age_years == 10.0


def test_montage_and_region_invariants():
    with pytest.raises(sig.SignalError):
        sig.Montage(["a", "a"], [[0, 0, 1], [0, 1, 0]])
    with pytest.raises(sig.SignalError):
        sig.Montage(["a"], [[0, 0, 2.0]])
    with pytest.raises(sig.SignalError):
        sig.RegionMap([("A", ["c1"]), ("B", ["c1", "c2"])])
    m = sig.hemisphere_montage(8)
    with pytest.raises(sig.SignalError):
        sig.RegionMap([("A", ["nope"])]).validate(m)


def test_default_region_map_partitions_montage():
    m, rm = sig.default_montage(), sig.default_region_map()
    assert len(m.channel_names) == 128
    rm.validate(m)
    assert len(rm.regions) == 12
    sizes = [len(c) for _, c in rm.regions]
    assert all(9 <= s <= 12 for s in sizes)
    members = [c for _, cs in rm.regions for c in cs]
    assert len(members) == len(set(members))


# ---------------------------------------------------------------- resample

def test_resample_paper_lengths():
    rec = make_rec(np.random.default_rng(1).normal(size=(2, 20000)), rate=500.0)
    out = sig.resample(rec, 250.0)
    assert out.n_samples == 10000 and out.sampling_rate_hz == 250.0
    assert out.subject_id == rec.subject_id and out.channel_names == rec.channel_names


def test_resample_identity_and_upsample_error():
    rec = make_rec(np.random.default_rng(2).normal(size=(2, 501)), rate=250.0)
    same = sig.resample(rec, 250.0)
    assert same.data.tobytes() == rec.data.tobytes()
    with pytest.raises(sig.SignalError):
        sig.resample(rec, 500.0)


def test_resample_keeps_sine_peak():
    rate, n = 500.0, 20000
    out = sig.resample(make_rec(sine(10, rate, n), rate=rate), 250.0)
    f, p = sp_signal.welch(out.data[0], fs=250.0, nperseg=1000)
    assert abs(f[np.argmax(p)] - 10.0) <= f[1] - f[0]


@settings(max_examples=20, deadline=None)
@given(n=st.integers(600, 3000), target=st.sampled_from([100.0, 125.0, 250.0, 200.0]))
def test_resample_length_floor_and_idempotent(n, target):
    rec = make_rec(np.zeros((1, n)), rate=500.0)
    out = sig.resample(rec, target)
    assert out.n_samples == int(np.floor(n * target / 500.0))
    assert sig.resample(out, target).n_samples == out.n_samples


# ---------------------------------------------------------------- filtering

def test_bandpass_white_noise_power_in_band():
    rate = 250.0
    x = np.random.default_rng(3).normal(size=(1, 250 * 120))
    y = sig.bandpass_zero_phase(make_rec(x, rate=rate), 0.5, 4.0).data[0]
    f, p = sp_signal.welch(y, fs=rate, nperseg=4096)
    inside = (f >= 0.5) & (f <= 4.0)
    assert np.trapezoid(p[inside], f[inside]) / np.trapezoid(p, f) >= 0.9


def test_bandpass_attenuates_out_of_band_sine():
    # truncating a sine leaks energy into the pass band roughly as 1/sqrt(T);
    # 300 s keeps that leakage under the 1% bound
    x = sine(10, 250.0, 250 * 300)
    y = sig.bandpass_zero_phase(make_rec(x), 0.5, 4.0).data[0]
    assert np.sqrt(np.mean(y**2)) <= 0.01 * np.sqrt(np.mean(x**2))


def test_bandpass_zero_lag_and_length():
    x = sine(2, 250.0, 5000)
    y = sig.bandpass_zero_phase(make_rec(x), 0.5, 4.0).data[0]
    assert y.shape == x.shape
    assert xcorr_lag(x, y) == 0


@settings(max_examples=15, deadline=None)
@given(freq=st.floats(6.0, 25.0), phase=st.floats(0, 2 * np.pi))
def test_zero_phase_property(freq, phase):
    x = sine(freq, 250.0, 4000, phase)
    y = sig.bandpass_zero_phase(make_rec(x), 4.0, 30.0).data[0]
    assert xcorr_lag(x, y) == 0


@pytest.mark.parametrize("lo,hi", [(0, 4), (4, 2), (1, 125), (1, 200)])
def test_bandpass_invalid_edges(lo, hi):
    with pytest.raises(sig.SignalError):
        sig.bandpass_zero_phase(make_rec(np.zeros((1, 1000))), lo, hi)


# ---------------------------------------------------------------- epochs

@pytest.mark.parametrize("seconds,dur,n_ep,n_per", [(40, 4, 10, 1000), (20, 2, 10, 500), (41, 4, 10, 1000)])
def test_epoch_counts(seconds, dur, n_ep, n_per):
    x = np.arange(seconds * 250, dtype=float)[None, :]
    es = sig.epoch(make_rec(x), dur)
    assert es.epochs.shape == (n_ep, 1, n_per)
    # contiguous from sample 0, trailing remainder dropped
    np.testing.assert_array_equal(es.epochs.reshape(-1), x[0, : n_ep * n_per])


def test_epoch_too_short():
    with pytest.raises(sig.SignalError):
        sig.epoch(make_rec(np.zeros((1, 100))), 1.0)


# ---------------------------------------------------------------- RANSAC

def ransac_fixture(bad=4, seed=0, n_ch=16):
    rng = np.random.default_rng(seed)
    rate = 250.0
    src = sine(7, rate, 2500) + 0.5 * sine(13, rate, 2500, 1.0)
    data = src[None, :] + 0.05 * rng.normal(size=(n_ch, 2500))
    if bad is not None:
        data[bad] = rng.normal(size=2500)
    return make_rec(data, rate=rate), sig.hemisphere_montage(n_ch)


def test_ransac_finds_independent_channel():
    rec, m = ransac_fixture(bad=4)
    assert sig.ransac_reject(rec, m, seed=0) == {"E5"}


def test_ransac_identical_channels_none_rejected():
    rec = make_rec(np.tile(sine(5, 250.0, 2500), (16, 1)))
    assert sig.ransac_reject(rec, sig.hemisphere_montage(16), seed=3) == set()


def test_ransac_deterministic_and_order_invariant():
    rec, m = ransac_fixture(bad=9, seed=5)
    a = sig.ransac_reject(rec, m, seed=11)
    assert a == sig.ransac_reject(rec, m, seed=11)
    perm = np.random.default_rng(0).permutation(16)
    shuffled = rec.replace(channel_names=[rec.channel_names[i] for i in perm], data=rec.data[perm])
    assert sig.ransac_reject(shuffled, m, seed=11) == a


def test_ransac_needs_eight_channels():
    rec = make_rec(np.zeros((7, 500)))
    with pytest.raises(sig.SignalError):
        sig.ransac_reject(rec, sig.hemisphere_montage(7))


@pytest.mark.parametrize("n,excluded", [(31, True), (30, False), (0, False)])
def test_exclude_recording(n, excluded):
    assert sig.exclude_recording({f"c{i}" for i in range(n)}) is excluded


def test_global_drop_threshold():
    # 400 of 3200 is exactly 12.5% and stays; 401 is dropped
    assert sig.global_drop({"a": 400, "b": 401, "c": 0}, 3200) == {"b"}


def test_interpolation_replaces_bad_channel():
    m = sig.hemisphere_montage(16)
    rec = make_rec(np.tile(sine(5, 250.0, 500), (16, 1)))
    broken = rec.data.copy()
    broken[3] = 100.0
    fixed = sig.interpolate_channels(rec.replace(data=broken), m, {"E4"})
    np.testing.assert_allclose(fixed.data, rec.data, atol=1e-12)


def test_preprocess_recording_chain():
    rng = np.random.default_rng(4)
    m = sig.hemisphere_montage(16)
    src = sine(10, 500.0, 5000)
    data = src + 0.05 * rng.normal(size=(16, 5000))
    data[2] = 3 * rng.normal(size=5000)
    res = sig.preprocess_recording(make_rec(data, rate=500.0), m, sig.PreprocessParams(), seed=0)
    assert not res.excluded and res.rejected == {"E3"}
    out = res.recording
    assert out.sampling_rate_hz == 250.0 and out.n_samples == 2500
    assert np.corrcoef(out.data[2], out.data[3])[0, 1] > 0.9
    strict = sig.PreprocessParams(max_rejected=0)
    assert sig.preprocess_recording(make_rec(data, rate=500.0), m, strict, seed=0).excluded


# ---------------------------------------------------------------- regions

def test_combine_regions_mean():
    rec = make_rec([[1.0, 3.0], [3.0, 1.0]], names=["c1", "c2"])
    out = sig.combine_regions(rec, sig.RegionMap([("A", ["c1", "c2"])]))
    assert out.channel_names == ["A"]
    np.testing.assert_array_equal(out.data, [[2.0, 2.0]])


def test_combine_regions_single_member_identity():
    rec = make_rec(np.random.default_rng(5).normal(size=(2, 50)), names=["c1", "c2"])
    out = sig.combine_regions(rec, sig.RegionMap([("A", ["c2"]), ("B", ["c1"])]))
    np.testing.assert_array_equal(out.data, rec.data[[1, 0]])


def test_combine_regions_default_map_and_missing():
    m = sig.default_montage()
    rec = make_rec(np.zeros((128, 10)), names=m.channel_names)
    out = sig.combine_regions(rec, sig.default_region_map())
    assert len(out.channel_names) == 12
    with pytest.raises(sig.SignalError):
        sig.combine_regions(rec.pick(m.channel_names[:5]), sig.default_region_map())


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_combine_regions_commutes_with_filter(seed):
    rng = np.random.default_rng(seed)
    rec = make_rec(rng.normal(size=(6, 1000)))
    rm = sig.RegionMap([("A", ["E1", "E2", "E3"]), ("B", ["E4"]), ("C", ["E5", "E6"])])
    a = sig.bandpass_zero_phase(sig.combine_regions(rec, rm), 1.0, 30.0).data
    b = sig.combine_regions(sig.bandpass_zero_phase(rec, 1.0, 30.0), rm).data
    assert np.sqrt(np.mean((a - b) ** 2)) <= 1e-9
