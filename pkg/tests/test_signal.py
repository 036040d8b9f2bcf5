import json
import struct
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from convprobe.signal import (
    BandRule,
    ConfigError,
    Dataset,
    DegenerateReferenceWarning,
    MalformedHeaderError,
    SynthConfig,
    Trial,
    TruncatedPayloadError,
    VersionMismatchError,
    common_average_reference,
    crop_offsets,
    crop_sliding,
    generate_synthetic_dataset,
    load_dataset,
    save_dataset,
)


def naive_band_power(x, fs, band):
    """Sum of squared single-sided amplitudes in band, by direct DFT summation."""
    T = x.shape[-1]
    t = np.arange(T)
    total = np.zeros(x.shape[:-1])
    for k in range(T // 2 + 1):
        f = k * fs / T
        if band[0] <= f <= band[1]:
            coef = (x * np.exp(-2j * np.pi * k * t / T)).sum(axis=-1)
            amp = np.abs(coef) / T * (1 if k in (0, T / 2) else 2)
            total += amp**2
    return total


# -- types -------------------------------------------------------------------


def test_trial_validation():
    Trial(np.zeros((2, 3)), 250.0, 0)
    with pytest.raises(ValueError):
        Trial(np.array([[np.nan, 1.0]]), 250.0, 0)
    with pytest.raises(ValueError):
        Trial(np.zeros((2, 3)), 0.0, 0)
    with pytest.raises(ValueError):
        Trial(np.zeros((2, 3)), 250.0, -1)
    with pytest.raises(ValueError):
        Trial(np.zeros((0, 3)), 250.0, 0)


def test_dataset_invariants():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1, 4)), np.array([0, 2]), 250.0, 2)
    ds = Dataset.from_trials([Trial(np.ones((1, 4)), 100.0, 1), Trial(np.zeros((1, 4)), 100.0, 0)], 2)
    assert len(ds) == 2 and ds[0].label == 1
    with pytest.raises(ValueError):
        Dataset.from_trials([Trial(np.ones((1, 4)), 100.0, 0), Trial(np.ones((1, 5)), 100.0, 0)], 1)
    with pytest.raises(ValueError):
        Dataset.from_trials([Trial(np.ones((1, 4)), 100.0, 0), Trial(np.ones((1, 4)), 200.0, 0)], 1)


# -- synthetic generation ----------------------------------------------------


def test_synthetic_determinism():
    cfg = SynthConfig(n_trials=5)
    a = generate_synthetic_dataset(cfg, 7)
    b = generate_synthetic_dataset(cfg, 7)
    assert a.data.tobytes() == b.data.tobytes()
    np.testing.assert_array_equal(a.labels, b.labels)
    assert a.metadata == b.metadata
    c = generate_synthetic_dataset(cfg, 8)
    assert not np.array_equal(a.data, c.data)


def test_synthetic_counts():
    ds = generate_synthetic_dataset(SynthConfig(n_trials=50), 0)
    assert len(ds) == 100
    assert np.bincount(ds.labels).tolist() == [50, 50]
    assert ds.data.shape == (100, 8, 522)


def test_alpha_power_ratio_noise_free():
    # amplitude x2 -> power x4; measured with a direct-summation DFT
    cfg = SynthConfig(n_trials=4, channels=2, noise_level=0.0, class_rules=[
        [BandRule((8.0, 12.0), None, 1.0)], [BandRule((8.0, 12.0), None, 2.0)],
    ])
    ds = generate_synthetic_dataset(cfg, 3)
    p = naive_band_power(ds.data.astype(float), cfg.sample_rate, (8.0, 12.0)).mean(axis=1)
    ratio = p[ds.labels == 1].mean() / p[ds.labels == 0].mean()
    assert ratio == pytest.approx(4.0, rel=0.05)


def test_noise_level_and_slope():
    # the level is an expected std: check RMS over many trials
    cfg = SynthConfig(n_trials=100, class_rules=[[]], noise_level=2.0)
    ds = generate_synthetic_dataset(cfg, 1)
    assert np.sqrt(np.mean(ds.data.astype(float) ** 2)) == pytest.approx(2.0, rel=0.05)
    spec = np.abs(np.fft.rfft(ds.data.astype(float), axis=-1)).mean(axis=(0, 1))
    f = np.fft.rfftfreq(522, 1 / 250)
    # 1/f: amplitude at 10 Hz about 4x that at 40 Hz
    lo = spec[(f > 9) & (f < 11)].mean()
    hi = spec[(f > 39) & (f < 41)].mean()
    assert lo / hi == pytest.approx(4.0, rel=0.25)


def test_phase_locked_rule_shares_phase():
    cfg = SynthConfig(n_trials=6, channels=1, noise_level=0.0,
                      class_rules=[[BandRule((10.0, 10.2), None, 1.0, phase_locked=True)]])
    ds = generate_synthetic_dataset(cfg, 0)
    for i in range(1, 6):
        np.testing.assert_allclose(ds.data[i], ds.data[0], atol=1e-6)


@pytest.mark.parametrize("rule,msg", [
    (BandRule((8.0, 130.0)), "Nyquist"),
    (BandRule((0.0, 10.0)), "Nyquist"),
    (BandRule((8.0, 12.0), multiplier=0.0), "multiplier"),
    (BandRule((8.0, 12.0), channels=[9]), "channel"),
    (BandRule((10.01, 10.02)), "no DFT bin"),
])
def test_synth_config_errors(rule, msg):
    with pytest.raises(ConfigError, match=msg):
        generate_synthetic_dataset(SynthConfig(n_trials=1, class_rules=[[rule]]), 0)


def test_synth_config_dict_round_trip():
    cfg = SynthConfig(n_trials=3)
    assert SynthConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    with pytest.raises(ConfigError, match="unknown"):
        SynthConfig.from_dict({"n_trails": 3})


# -- preprocessing -----------------------------------------------------------


def test_car_identical_channels_zero():
    s = np.sin(np.arange(20))
    out = common_average_reference(np.stack([s, s, s]))
    np.testing.assert_allclose(out, 0.0, atol=1e-12)


def test_car_two_channels():
    a, b = np.arange(5.0), np.arange(5.0) ** 2
    out = common_average_reference(np.stack([a, b]))
    np.testing.assert_allclose(out, np.stack([(a - b) / 2, (b - a) / 2]))


def test_car_trial_and_single_channel_warning():
    t = Trial(np.ones((1, 8)), 250.0, 0)
    with pytest.warns(DegenerateReferenceWarning):
        out = common_average_reference(t)
    assert isinstance(out, Trial) and np.all(out.data == 0)


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 40)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_car_properties(x):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateReferenceWarning)
        once = common_average_reference(x)
        twice = common_average_reference(once)
    scale = 1.0 + np.abs(x).max()
    assert once.shape == x.shape
    assert np.all(np.abs(once.mean(axis=0)) < 1e-9 * scale)
    np.testing.assert_allclose(twice, once, atol=1e-9 * scale)


def test_crop_examples():
    x = np.random.default_rng(0).standard_normal((2, 522))
    crops = crop_sliding(x, 522, 7)
    assert len(crops) == 1 and np.array_equal(crops[0], x)
    y = np.random.default_rng(1).standard_normal((2, 524))
    crops = crop_sliding(y, 522, 1)
    assert len(crops) == 3
    for o, c in zip(range(3), crops):
        np.testing.assert_array_equal(c, y[:, o : o + 522])
    with pytest.raises(ValueError):
        crop_sliding(np.zeros((2, 521)), 522)
    with pytest.raises(ValueError):
        crop_sliding(np.zeros((2, 10)), 5, 0)


@given(st.integers(1, 200), st.integers(1, 50), st.integers(1, 20))
def test_crop_count_and_partition(T, window, stride):
    if window > T:
        return
    offs = crop_offsets(T, window, stride)
    assert len(offs) == (T - window) // stride + 1
    assert offs[0] == 0 and np.all(np.diff(offs) == stride)
    x = np.arange(T, dtype=float)[None]
    parts = crop_sliding(x, window, window)
    flat = np.concatenate([p[0] for p in parts])
    np.testing.assert_array_equal(flat, x[0, : flat.size])


def test_crop_trial_keeps_label():
    t = Trial(np.zeros((1, 10)), 50.0, 1)
    crops = crop_sliding(t, 8, 1)
    assert all(isinstance(c, Trial) and c.label == 1 and c.n_times == 8 for c in crops)


# -- file I/O ----------------------------------------------------------------


def test_dataset_round_trip(tmp_path):
    ds = generate_synthetic_dataset(SynthConfig(n_trials=3), 5)
    p = tmp_path / "d.cvpr"
    save_dataset(p, ds)
    back = load_dataset(p)
    assert back.data.tobytes() == ds.data.tobytes()
    np.testing.assert_array_equal(back.labels, ds.labels)
    assert back.metadata == ds.metadata and back.sample_rate == ds.sample_rate and back.n_classes == ds.n_classes


def test_corrupted_magic(tmp_path):
    ds = generate_synthetic_dataset(SynthConfig(n_trials=1), 0)
    p = tmp_path / "d.cvpr"
    save_dataset(p, ds)
    raw = bytearray(p.read_bytes())
    raw[0:4] = b"XXXX"
    p.write_bytes(bytes(raw))
    with pytest.raises(MalformedHeaderError):
        load_dataset(p)


def test_truncated_payload(tmp_path):
    # header declares 3 channels, payload holds 2
    data = np.zeros((1, 2, 10), dtype="<f4")
    header = json.dumps({"n_trials": 1, "channels": 3, "time": 10, "sample_rate": 100.0, "n_classes": 1,
                         "labels": [0], "metadata": {}, "dtype": "<f4"}).encode()
    p = tmp_path / "t.cvpr"
    p.write_bytes(struct.pack("<8sIQ", b"CVPRDSET", 1, len(header)) + header + data.tobytes())
    with pytest.raises(TruncatedPayloadError):
        load_dataset(p)


def test_version_mismatch(tmp_path):
    ds = generate_synthetic_dataset(SynthConfig(n_trials=1), 0)
    p = tmp_path / "d.cvpr"
    save_dataset(p, ds)
    raw = bytearray(p.read_bytes())
    raw[8:12] = struct.pack("<I", 99)
    p.write_bytes(bytes(raw))
    with pytest.raises(VersionMismatchError):
        load_dataset(p)


def test_malformed_json_header(tmp_path):
    p = tmp_path / "bad.cvpr"
    p.write_bytes(struct.pack("<8sIQ", b"CVPRDSET", 1, 5) + b"{nope")
    with pytest.raises(MalformedHeaderError):
        load_dataset(p)
