import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from convprobe.signal import Trial
from oracles import naive_amplitudes
from convprobe.spectral import (
    AmplitudePerturbation,
    PhasePerturbation,
    Spectrum,
    apply_amplitude_perturbation,
    apply_phase_perturbation,
    band_power,
    bin_frequencies,
    dft_forward,
    dft_inverse,
    parseval_weights,
    sample_amplitude_factors,
    sample_phase_shifts,
    wrap_phase,
)


def circ_diff(a, b):
    return np.abs(wrap_phase(np.asarray(a) - np.asarray(b)))


@pytest.fixture
def trial(rng):
    return rng.standard_normal((3, 522))


def test_constant_signal():
    x = np.array([[2.5] * 40, [-1.0] * 40])
    s = dft_forward(x)
    np.testing.assert_allclose(s.amplitudes[:, 0], [2.5, 1.0], atol=1e-6)
    np.testing.assert_allclose(s.amplitudes[:, 1:], 0.0, atol=1e-6)
    np.testing.assert_allclose(s.phases[:, 0], [0.0, np.pi])


@pytest.mark.parametrize("T,k", [(522, 21), (522, 261), (101, 7), (64, 1)])
def test_unit_cosine(T, k):
    t = np.arange(T)
    s = dft_forward(np.cos(2 * np.pi * k * t / T)[None])
    assert s.amplitudes[0, k] == pytest.approx(1.0, abs=1e-6)
    assert s.phases[0, k] == pytest.approx(0.0, abs=1e-6)
    others = np.delete(s.amplitudes[0], k)
    assert np.all(others <= 1e-6)


def test_matches_naive_oracle(trial):
    amps, X = naive_amplitudes(trial)
    s = dft_forward(trial)
    np.testing.assert_allclose(s.amplitudes, amps, atol=1e-6)
    big = amps > 1e-3
    assert np.all(circ_diff(s.phases[big], np.angle(X)[big]) < 1e-6)


def test_spectrum_invariants(trial):
    s = dft_forward(trial, 250.0)
    assert s.n_bins == 522 // 2 + 1
    assert np.all(s.amplitudes >= 0)
    assert np.all((s.phases > -np.pi) & (s.phases <= np.pi))
    for b in (0, 261):
        assert np.all(np.isin(s.phases[:, b], (0.0, np.pi)))
    assert s.frequencies[21] == pytest.approx(21 * 250.0 / 522)
    np.testing.assert_allclose(bin_frequencies(10, 5.0), np.arange(6) * 0.5)


def test_errors():
    with pytest.raises(ValueError):
        dft_forward(np.array([[1.0]]))
    with pytest.raises(ValueError):
        dft_forward(np.array([[1.0, np.inf, 2.0]]))
    with pytest.raises(ValueError):
        Spectrum(np.ones((1, 5)), np.zeros((1, 5)), 10)
    with pytest.raises(ValueError):
        Spectrum(-np.ones((1, 6)), np.zeros((1, 6)), 10)


@given(st.integers(2, 80), st.integers(0, 2**32 - 1))
def test_round_trip(T, seed):
    x = np.random.default_rng(seed).standard_normal((2, T))
    back = dft_inverse(dft_forward(x))
    assert np.max(np.abs(back - x)) <= 1e-5 * np.abs(x).max()
    s = dft_forward(x)
    s2 = dft_forward(back)
    np.testing.assert_allclose(s2.amplitudes, s.amplitudes, atol=1e-5)


def test_single_tone_synthesis():
    T, k, th = 100, 9, 0.7
    amps = np.zeros((1, 51)); amps[0, k] = 1.0
    ph = np.zeros((1, 51)); ph[0, k] = th
    out = dft_inverse(Spectrum(amps, ph, T))
    np.testing.assert_allclose(out[0], np.cos(2 * np.pi * k * np.arange(T) / T + th), atol=1e-12)
    zero = dft_inverse(Spectrum(np.zeros((2, 51)), np.zeros((2, 51)), T))
    assert np.all(zero == 0)


@given(st.integers(2, 120), st.integers(0, 2**32 - 1))
def test_parseval(T, seed):
    x = np.random.default_rng(seed).standard_normal((1, T))
    s = dft_forward(x)
    lhs = float((x**2).sum())
    rhs = float(T * (parseval_weights(T) * s.amplitudes[0] ** 2).sum())
    assert rhs == pytest.approx(lhs, rel=1e-4)


# -- perturbations -----------------------------------------------------------


def test_amplitude_identity(trial):
    out = apply_amplitude_perturbation(trial, np.ones((3, 262)))
    np.testing.assert_allclose(out, trial, atol=1e-5)


def test_amplitude_tone_doubles():
    T, k = 200, 13
    x = np.cos(2 * np.pi * k * np.arange(T) / T)[None] + 0.3 * np.cos(2 * np.pi * 40 * np.arange(T) / T)[None]
    f = np.ones((1, 101)); f[0, k] = 2.0
    s = dft_forward(apply_amplitude_perturbation(x, f))
    s0 = dft_forward(x)
    assert s.amplitudes[0, k] == pytest.approx(2.0, abs=1e-5)
    np.testing.assert_allclose(np.delete(s.amplitudes[0], k), np.delete(s0.amplitudes[0], k), atol=1e-5)


def test_amplitude_ratio_equals_factor(trial, rng):
    f = sample_amplitude_factors(rng, (3, 262))
    out = apply_amplitude_perturbation(trial, AmplitudePerturbation(f))
    a0, _ = naive_amplitudes(trial)
    a1, _ = naive_amplitudes(out)
    np.testing.assert_allclose(a1 / a0, f, atol=1e-5)


def test_amplitude_keeps_phase_and_composes(trial, rng):
    f1 = sample_amplitude_factors(rng, (3, 262))
    f2 = sample_amplitude_factors(rng, (3, 262))
    once = apply_amplitude_perturbation(trial, f1)
    s0, s1 = dft_forward(trial), dft_forward(once)
    assert np.all(circ_diff(s1.phases, s0.phases) < 1e-5)
    twice = apply_amplitude_perturbation(once, f2)
    np.testing.assert_allclose(twice, apply_amplitude_perturbation(trial, f1 * f2), atol=1e-5)


def test_amplitude_trial_and_errors():
    t = Trial(np.ones((2, 10)), 50.0, 1)
    out = apply_amplitude_perturbation(t, np.ones((2, 6)))
    assert isinstance(out, Trial) and out.label == 1 and out.sample_rate == 50.0
    with pytest.raises(ValueError):
        apply_amplitude_perturbation(t, np.ones((2, 5)))
    with pytest.raises(ValueError):
        AmplitudePerturbation(np.array([1.0, 0.0]))


def test_phase_identity(trial):
    np.testing.assert_allclose(apply_phase_perturbation(trial, np.zeros(262)), trial, atol=1e-5)


def test_phase_single_tone():
    T, k, s = 120, 11, 1.3
    t = np.arange(T)
    shifts = np.zeros(61); shifts[k] = s
    out = apply_phase_perturbation(np.cos(2 * np.pi * k * t / T)[None], PhasePerturbation(shifts))
    np.testing.assert_allclose(out[0], np.cos(2 * np.pi * k * t / T + s), atol=1e-10)


def test_phase_preserves_relative_phase_and_amplitudes(trial, rng):
    shifts = sample_phase_shifts(rng, 262, n_times=522)
    out = apply_phase_perturbation(trial, shifts)
    s0, s1 = dft_forward(trial), dft_forward(out)
    np.testing.assert_allclose(s1.amplitudes, s0.amplitudes, atol=1e-5)
    rel0 = wrap_phase(s0.phases[0] - s0.phases[1])
    rel1 = wrap_phase(s1.phases[0] - s1.phases[1])
    assert np.all(circ_diff(rel1, rel0)[1:-1] < 1e-6)
    adv = circ_diff(s1.phases - s0.phases, shifts)
    assert np.all(adv[:, 1:-1] < 1e-6)


def test_phase_real_bins_ignored():
    x = np.array([[3.0, 1.0, 3.0, 1.0]])  # DC and Nyquist only
    out = apply_phase_perturbation(x, np.array([1.0, 0.5, 2.0]))
    np.testing.assert_allclose(out, x, atol=1e-12)


def test_phase_per_trial_shifts(rng):
    x = rng.standard_normal((2, 3, 16))
    shifts = sample_phase_shifts(rng, (2, 9), n_times=16)
    out = apply_phase_perturbation(x, shifts)
    for i in range(2):
        np.testing.assert_allclose(out[i], apply_phase_perturbation(x[i], shifts[i]))
    with pytest.raises(ValueError):
        apply_phase_perturbation(x, np.zeros(8))
    with pytest.raises(ValueError):
        apply_phase_perturbation(x, np.zeros((3, 9)))


def test_samplers(rng):
    f = sample_amplitude_factors(rng, (200, 100))
    assert f.mean() == pytest.approx(1.0, abs=1e-3) and f.std() == pytest.approx(0.02, rel=0.02)
    assert sample_amplitude_factors(rng, 1000, sigma=5.0).min() >= 1e-6
    s = sample_phase_shifts(rng, (400, 262), n_times=522)
    assert np.all(s[:, 0] == 0) and np.all(s[:, -1] == 0)
    assert np.all((s > -np.pi) & (s <= np.pi))
    assert wrap_phase(-np.pi) == pytest.approx(np.pi)
    assert wrap_phase(3 * np.pi) == pytest.approx(np.pi)


def test_band_power():
    T, fs = 500, 250.0
    t = np.arange(T)
    x = (2.0 * np.cos(2 * np.pi * 10 * t / fs) + np.cos(2 * np.pi * 60 * t / fs))[None]
    assert band_power(x, fs, (8, 12))[0] == pytest.approx(4.0, abs=1e-9)
    assert band_power(x, fs, (50, 70))[0] == pytest.approx(1.0, abs=1e-9)
