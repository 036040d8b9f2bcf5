import math

import numpy as np
import pytest
from scipy.stats import norm

from convprobe.detectors import MatchedFilter, cosine_template
from convprobe.network import build_network, default_spec
from convprobe.signal import load_dataset
from convprobe.windows import (
    WINDOW_COLUMNS,
    WindowSet,
    layer_activations,
    most_activating_windows,
    save_window_block,
    standardize,
    window_summary,
    write_windows_csv,
)

L = 25


@pytest.fixture
def planted(rng):
    """100 noise trials; trials 0, 10, ..., 90 carry a strong template copy."""
    template = cosine_template(10.0, 100.0, L)
    x = rng.standard_normal((100, 1, 200))
    offsets = {}
    for t in range(0, 100, 10):
        o = int(rng.integers(0, 200 - L))
        x[t, 0, o : o + L] += 5.0 * template
        offsets[t] = o
    return MatchedFilter(template, channels=1, window=200), x, offsets


def test_standardize_examples():
    z, deg = standardize(np.array([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(z, [-1.2247, 0.0, 1.2247], atol=1e-4)
    assert not deg
    z, deg = standardize(np.array([5.0, 5.0, 5.0]))
    assert np.all(z == 0) and deg
    with pytest.raises(ValueError):
        standardize(np.array([1.0]))


def test_standardize_property(rng):
    x = rng.standard_normal((50, 3, 17)) * rng.uniform(0.1, 100, (50, 3, 1)) + rng.uniform(-1e3, 1e3, (50, 3, 1))
    z, deg = standardize(x)
    assert not deg.any()
    assert np.abs(z.mean(axis=-1)).max() < 1e-9
    assert np.abs(z.std(axis=-1) - 1).max() < 1e-9


def test_quota(planted):
    model, x, _ = planted
    ws = most_activating_windows(model, 1, 0, x[:20])
    assert len(ws) == 2 == math.ceil(0.1 * 20)
    assert len(most_activating_windows(model, 1, 0, x[:3])) == 1
    assert len(most_activating_windows(model, 1, 0, x, fraction=1.0)) == 100


def test_planted_offsets_recovered(planted):
    model, x, offsets = planted
    ws = most_activating_windows(model, 1, 0, x)
    assert len(ws) == 10
    hits = sum(int(t) in offsets and f.start == offsets[int(t)] for t, f in zip(ws.trials, ws.fields))
    assert hits >= 9


def test_duplicates_one_window_per_trial(planted):
    model, x, _ = planted
    dup = np.repeat(x[:1], 30, axis=0)
    ws = most_activating_windows(model, 1, 0, dup)
    assert len(ws) == 3 and len(set(ws.trials.tolist())) == 3
    units = most_activating_windows(model, 1, 0, dup, mode="units")
    assert len(set(units.trials.tolist())) == len(units)


def test_sorted_and_top_k(planted):
    model, x, _ = planted
    ws = most_activating_windows(model, 1, 0, x, fraction=0.25)
    assert np.all(np.diff(ws.activations) <= 0)
    per_trial = layer_activations(model, 1, x)[:, 0].max(axis=1)
    rest = np.setdiff1d(np.arange(100), ws.trials)
    assert ws.activations.min() >= per_trial[rest].max()
    np.testing.assert_allclose(ws.activations, per_trial[ws.trials])


def test_fields_within_window_and_standardized(rng):
    net = build_network(default_spec(channels=2), 0)
    x = rng.standard_normal((15, 2, 522))
    for layer in net.analysis_layers:
        acts = layer_activations(net, layer, x)
        ws = most_activating_windows(net, layer, 3, x, fraction=0.3, activations=acts)
        width = net.receptive_field(layer, 0).width
        assert ws.windows.shape == (5, 2, width)
        for t, f in zip(ws.trials, ws.fields):
            assert 0 <= f.start < f.end <= 522 and f.width == width
        np.testing.assert_allclose(ws.windows.mean(axis=-1), 0, atol=1e-9)


def test_units_mode_matches_trial_max_when_quota_fits(planted):
    model, x, _ = planted
    a = most_activating_windows(model, 1, 0, x, fraction=0.1)
    b = most_activating_windows(model, 1, 0, x, fraction=0.1 / model.n_units(1), mode="units")
    assert len(b) == 10
    np.testing.assert_array_equal(np.sort(a.trials), np.sort(b.trials))
    np.testing.assert_allclose(a.activations, b.activations)


def test_errors(planted):
    model, x, _ = planted
    with pytest.raises(ValueError):
        most_activating_windows(model, 1, 1, x)
    with pytest.raises(ValueError):
        most_activating_windows(model, 2, 0, x)
    with pytest.raises(ValueError):
        most_activating_windows(model, 1, 0, x, mode="all")
    with pytest.raises(ValueError):
        most_activating_windows(model, 1, 0, x[:0])


def _set(windows):
    w = np.asarray(windows, dtype=float)
    k = w.shape[0]
    return WindowSet(1, 0, np.arange(k), [], w, np.zeros(k), np.zeros(w.shape[:2], bool))


def test_summary_examples(rng):
    w = rng.standard_normal((1, 2, 8))
    s = window_summary(_set(w))
    np.testing.assert_array_equal(s.median, w[0])
    assert np.all(s.q75 - s.q25 == 0)
    s = window_summary(_set(np.stack([w[0], -w[0]])))
    np.testing.assert_allclose(s.median, 0.0, atol=1e-15)
    w2 = np.zeros((3, 2, 4))
    w2[:, 1, 2] = 3.0
    assert window_summary(_set(w2)).channel == 1
    assert window_summary(_set(w2), channel=0).channel == 0
    with pytest.raises(ValueError):
        window_summary(_set(np.zeros((0, 2, 4))))


def median_exceedance(x, k=5):
    """P(|median of k iid N(0,1)| > x) from the order-statistic distribution."""
    F = norm.cdf(x)
    below = sum(math.comb(k, j) * F**j * (1 - F) ** (k - j) for j in range(k // 2 + 1, k + 1))
    return 2 * (1 - below)


def test_summary_order_statistics(rng):
    # 5 windows of iid scores, 20000 time points
    s = window_summary(_set(rng.standard_normal((5, 1, 20000))))
    p07 = median_exceedance(0.7)
    assert p07 == pytest.approx(0.190, abs=1e-3)
    rate = np.mean(np.abs(s.median) > 0.7)
    assert rate == pytest.approx(p07, abs=4 * math.sqrt(p07 * (1 - p07) / 20000))
    assert median_exceedance(1.386) == pytest.approx(0.01, abs=1e-4)
    assert np.mean(np.abs(s.median) > 1.386) < 0.01 + 4 * math.sqrt(0.01 * 0.99 / 20000)


def test_exports(tmp_path, planted):
    model, x, _ = planted
    sets = [most_activating_windows(model, 1, 0, x)]
    write_windows_csv(tmp_path / "w.csv", sets)
    lines = (tmp_path / "w.csv").read_bytes().split(b"\r\n")
    assert lines[0].decode() == ",".join(WINDOW_COLUMNS) and len(lines) == 12
    save_window_block(tmp_path / "w.cvpr", sets, 100.0)
    ds = load_dataset(tmp_path / "w.cvpr")
    assert ds.data.shape == (10, 1, L) and ds.metadata["layer"] == 1
    assert [w["trial"] for w in ds.metadata["windows"]] == sets[0].trials.tolist()
    with pytest.raises(ValueError):
        save_window_block(tmp_path / "e.cvpr", [], 100.0)
