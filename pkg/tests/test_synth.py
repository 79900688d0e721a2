import numpy as np
import pytest
from scipy import signal as sp_signal
from scipy import stats

from brainage import signal as sig
from brainage import synth
from brainage._utils import derive_seed, read_json


def small(**kw):
    base = dict(n_channels=16, n_sources=8, n_bad_channels=0)
    base.update(kw)
    return synth.SynthConfig(**base)


def band_power(rec, band):
    lo, hi = {"delta": (0.5, 4), "theta": (4, 7), "alpha": (7, 14), "beta": (14, 30)}[band]
    f, p = sp_signal.welch(rec.data, fs=rec.sampling_rate_hz, nperseg=1024)
    sel = (f >= lo) & (f < hi)
    return float(np.log(p[:, sel].sum(axis=1).mean()))


def cohort(cfg):
    ages = synth.subject_ages(cfg)
    recs = [synth.generate_subject(a, cfg, derive_seed(cfg.seed, "subject", i)) for i, a in enumerate(ages)]
    return ages, recs


def test_config_validation():
    with pytest.raises(ValueError):
        synth.SynthConfig(age_min=10, age_max=10)
    with pytest.raises(ValueError):
        synth.Effect("gamma")
    with pytest.raises(ValueError):
        synth.Effect("alpha", strength=-0.1)
    with pytest.raises(ValueError):
        synth.Effect("alpha", parameter="exponent")
    cfg = small(seed=4)
    assert synth.SynthConfig.from_dict(cfg.to_dict()) == cfg


def test_generate_subject_shapes_and_finite():
    eo, ec = synth.generate_subject(10.0, small(), seed=1, subject_id="x")
    assert eo.state == "EO" and ec.state == "EC"
    assert eo.n_samples == 20 * 500 and ec.n_samples == 40 * 500
    assert eo.sampling_rate_hz == 500.0 and len(eo.channel_names) == 16
    for rec in (eo, ec):
        assert np.all(np.isfinite(rec.data))
        np.testing.assert_allclose(rec.data.mean(axis=1), 0.0, atol=1e-9 * np.abs(rec.data).max())


def test_ec_has_stronger_alpha():
    cfg = small(effects=())
    eo, ec = synth.generate_subject(12.0, cfg, seed=2)
    assert band_power(ec, "alpha") > band_power(eo, "alpha") + np.log(2)


def test_age_out_of_range():
    with pytest.raises(ValueError):
        synth.generate_subject(30.0, small(), seed=0)


def test_bit_identical_regeneration():
    a = synth.generate_subject(8.5, small(), seed=9)
    b = synth.generate_subject(8.5, small(), seed=9)
    for x, y in zip(a, b):
        assert x.data.tobytes() == y.data.tobytes()
    c = synth.generate_subject(8.5, small(), seed=10)
    assert c[0].data.tobytes() != a[0].data.tobytes()


def test_null_config_is_age_independent():
    # permutation test of log band power between the younger and older half
    cfg = small(n_subjects=50, effects=(), seed=21, duration_ec_s=8.0, duration_eo_s=4.0)
    ages, recs = cohort(cfg)
    young = ages < np.median(ages)
    for band in ("delta", "theta", "alpha", "beta"):
        p = np.array([band_power(ec, band) for _, ec in recs])
        res = stats.permutation_test((p[young], p[~young]), lambda a, b: np.mean(a) - np.mean(b),
                                     n_resamples=2000, random_state=0)
        assert res.pvalue > 0.01, band


def test_alpha_effect_recovered_by_spectral_oracle():
    cfg = small(n_subjects=100, seed=5, duration_ec_s=8.0, duration_eo_s=4.0,
                effects=(synth.Effect("alpha", direction="+", strength=0.6),))
    ages, recs = cohort(cfg)
    alpha = [band_power(ec, "alpha") for _, ec in recs]
    assert stats.spearmanr(ages, alpha)[0] >= 0.5


def test_default_effects_directions():
    cfg = small(n_subjects=40, seed=6, duration_ec_s=8.0, duration_eo_s=4.0)
    ages, recs = cohort(cfg)
    rho = {b: stats.spearmanr(ages, [band_power(ec, b) for _, ec in recs])[0] for b in ("delta", "theta", "alpha")}
    assert rho["delta"] < -0.5 and rho["theta"] < -0.5 and rho["alpha"] > 0.5


def test_colored_noise_exponent():
    rng = np.random.default_rng(0)
    x = synth.colored_noise(rng, 1, 2**16, 250.0, np.array([1.5]), 20.0)[0]
    f, p = sp_signal.welch(x, fs=250.0, nperseg=2048)
    sel = (f >= 2) & (f <= 60)
    slope = np.polyfit(np.log10(f[sel]), np.log10(p[sel]), 1)[0]
    assert slope == pytest.approx(-1.5, abs=0.1)
    assert np.std(x) == pytest.approx(synth.aperiodic_rms(2**16, 250.0, 1.5, 20.0), rel=0.05)


def test_generate_dataset(tmp_path):
    cfg = small(n_subjects=50, seed=3, duration_ec_s=4.0, duration_eo_s=2.0, n_bad_channels=1)
    man = synth.generate_dataset(cfg, tmp_path / "c")
    bundles = sig.iter_bundles(tmp_path / "c")
    assert len(bundles) == 100
    ages = {s["subject_id"]: s["age_years"] for s in man["subjects"]}
    assert len(ages) == 50
    for b in bundles:
        meta = read_json(b / "meta.json")
        assert meta["age_years"] == ages[meta["subject_id"]]
    assert read_json(tmp_path / "c" / "manifest.json") == man
    assert all(5.0 <= a <= 22.0 for a in ages.values())
    assert [e["description"] for e in man["effects"]]
    sig.RegionMap.load(tmp_path / "c" / "regions.json").validate(sig.Montage.load(tmp_path / "c" / "montage.json"))


def test_dataset_regeneration_byte_identical(tmp_path):
    from brainage._utils import sha256_tree

    cfg = small(n_subjects=3, seed=8, duration_ec_s=4.0, duration_eo_s=2.0)
    synth.generate_dataset(cfg, tmp_path / "a")
    synth.generate_dataset(cfg, tmp_path / "b")
    assert sha256_tree(tmp_path / "a") == sha256_tree(tmp_path / "b")
