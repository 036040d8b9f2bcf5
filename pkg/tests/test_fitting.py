import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from convprobe.fitting import (
    FIT_COLUMNS,
    FitRecord,
    compare_fit_errors,
    fit_linear,
    fit_sinusoid,
    write_fits_csv,
)
from convprobe.spectral import wrap_phase


def fine_grid_oracle(y, step=1e-4):
    """Exhaustive search over omega with a batched 3-parameter least squares."""
    n = y.size
    x = np.arange(n)
    omegas = np.arange(np.pi / n, np.pi - 1e-3, step)
    A = np.stack([np.ones((omegas.size, n)), np.cos(omegas[:, None] * x), np.sin(omegas[:, None] * x)], axis=2)
    G = np.einsum("gni,gnj->gij", A, A)
    coef = np.linalg.solve(G, np.einsum("gni,n->gi", A, y)[..., None])[..., 0]
    r = y[None] - np.einsum("gni,gi->gn", A, coef)
    sse = np.einsum("gn,gn->g", r, r)
    j = int(np.argmin(sse))
    return omegas[j], sse[j] / n


def test_on_grid_recovery():
    W = 36
    x = np.arange(W)
    f = fit_sinusoid(np.cos(2 * np.pi * 5 * x / W + 0.3))
    assert f.bin == 5 and not f.refined
    assert f.omega == pytest.approx(2 * np.pi * 5 / W, abs=1e-12)
    assert f.phase == pytest.approx(0.3, abs=1e-6)
    assert f.amplitude == pytest.approx(1.0, abs=1e-6)
    assert f.mse < 1e-10 and abs(f.offset) < 1e-12


def test_sample_rate_and_nyquist():
    x = np.arange(20)
    f = fit_sinusoid(3.0 * np.cos(np.pi * x), sample_rate=250.0)
    assert f.bin == 10 and f.frequency_hz == pytest.approx(125.0)
    assert f.amplitude == pytest.approx(3.0) and f.mse < 1e-20


def test_flat_input_flagged():
    f = fit_sinusoid(np.zeros(10))
    assert f.degenerate and f.amplitude == 0 and f.mse == 0 and f.offset == 0
    assert fit_sinusoid(np.full(8, 2.5)).offset == 2.5
    with pytest.raises(ValueError):
        fit_sinusoid([1.0, 2.0, 3.0])


def test_off_grid_with_noise(rng):
    W, k_true, sigma = 40, 5.4, 0.1
    x = np.arange(W)
    y = 1.3 * np.cos(2 * np.pi * k_true * x / W + 1.0) + sigma * rng.standard_normal(W)
    grid = fit_sinusoid(y, refine=False)
    step = 2 * np.pi / W
    om_true = 2 * np.pi * k_true / W
    assert abs(grid.omega - om_true) <= step
    ref = fit_sinusoid(y)
    om_oracle, mse_oracle = fine_grid_oracle(y)
    assert abs(ref.omega - om_true) <= step
    assert ref.mse <= 1.5 * sigma**2
    assert ref.mse <= mse_oracle + 1e-9
    assert abs(ref.omega - om_oracle) < 2e-4


def test_refinement_never_worse(rng):
    for _ in range(20):
        y = rng.standard_normal(int(rng.integers(6, 60)))
        a, b = fit_sinusoid(y, refine=False), fit_sinusoid(y)
        assert b.mse <= a.mse + 1e-15
        assert 0 <= b.omega <= np.pi and -np.pi < b.phase <= np.pi


def test_constant_and_sign_invariance(rng):
    W = 30
    y = np.cos(2 * np.pi * 4 * np.arange(W) / W - 1.1) + 0.05 * rng.standard_normal(W)
    base = fit_sinusoid(y)
    up = fit_sinusoid(y + 7.0)
    assert up.offset == pytest.approx(base.offset + 7.0, abs=1e-9)
    assert up.amplitude == pytest.approx(base.amplitude, abs=1e-9)
    assert up.omega == pytest.approx(base.omega, abs=1e-6) and up.mse == pytest.approx(base.mse, abs=1e-12)
    neg = fit_sinusoid(-y)
    assert neg.amplitude == pytest.approx(base.amplitude, abs=1e-9)
    assert abs(wrap_phase(neg.phase - base.phase - np.pi)) < 1e-6


def test_linear_examples(rng):
    x = np.arange(12.0)
    lf = fit_linear(2 * x + 1)
    assert lf.slope == pytest.approx(2.0) and lf.intercept == pytest.approx(1.0) and lf.mse < 1e-24
    z = (np.array([1.0, 2.0, 3.0]) - 2.0) / np.std([1.0, 2.0, 3.0])
    lz = fit_linear(z)
    assert lz.slope > 0 and lz.mse < 1e-12
    y = rng.standard_normal(25)
    A = np.stack([np.arange(25.0), np.ones(25)], axis=1)
    m, b = np.linalg.solve(A.T @ A, A.T @ y)
    lr = fit_linear(y)
    assert lr.slope == pytest.approx(m, abs=1e-10) and lr.intercept == pytest.approx(b, abs=1e-10)
    assert lr.mse == pytest.approx(np.mean((y - A @ [m, b]) ** 2), abs=1e-10)
    with pytest.raises(ValueError):
        fit_linear([1.0])


@given(st.integers(8, 80), st.floats(0.0, 1.0), st.floats(-np.pi, np.pi), st.floats(0.1, 5.0), st.floats(-3, 3))
def test_sine_beats_line_on_pure_sinusoids(n, kfrac, theta, amp, off):
    k = 1 + int(kfrac * (n // 2 - 1))  # at least one full period
    y = off + amp * np.cos(2 * np.pi * k * np.arange(n) / n + theta)
    assert fit_sinusoid(y).mse <= fit_linear(y).mse + 1e-12


def test_compare_fit_errors():
    lin = np.linspace(1.0, 2.0, 6)
    cmp_ = compare_fit_errors(lin - 1.0, lin)
    assert cmp_.pvalue == pytest.approx(0.03125, abs=1e-15)
    assert cmp_.mean_sine == pytest.approx(lin.mean() - 1.0)
    same = compare_fit_errors(lin, lin)
    assert same.test.degenerate and same.pvalue == 1.0
    with pytest.raises(ValueError):
        compare_fit_errors(lin[:4], lin[:4])
    with pytest.raises(ValueError):
        compare_fit_errors(lin, lin[:5])


def test_fits_csv(tmp_path):
    y = np.cos(np.arange(10.0))
    rec = FitRecord(2, 7, fit_sinusoid(y, 250.0), fit_linear(y))
    write_fits_csv(tmp_path / "f.csv", [rec])
    lines = (tmp_path / "f.csv").read_bytes().split(b"\r\n")
    assert lines[0].decode() == ",".join(FIT_COLUMNS)
    cells = lines[1].decode().split(",")
    assert cells[:2] == ["2", "7"] and float(cells[4]) == rec.sine.frequency_hz
