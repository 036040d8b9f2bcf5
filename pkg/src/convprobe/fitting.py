"""Sinusoid and line fits of window series, and their error comparison."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .spectral import wrap_phase
from .stats import WilcoxonResult, wilcoxon_signed_rank

MIN_COMPARISON_PAIRS = 5


@dataclass
class SineFit:
    """``y ≈ offset + amplitude * cos(omega * x + phase)`` with x = 0, 1, ...

    ``omega`` is in radians per sample; ``frequency_hz`` uses the sample rate
    given to the fit (1.0 when none, i.e. cycles per sample). ``bin`` is the
    best grid bin before refinement.
    """

    offset: float
    amplitude: float
    omega: float
    frequency_hz: float
    phase: float
    mse: float
    bin: int
    refined: bool = False
    degenerate: bool = False


@dataclass
class LinearFit:
    slope: float
    intercept: float
    mse: float


@dataclass
class FitComparison:
    sine_mse: np.ndarray
    linear_mse: np.ndarray
    mean_sine: float
    mean_linear: float
    test: WilcoxonResult

    @property
    def pvalue(self) -> float:
        return self.test.pvalue

    @property
    def statistic(self) -> float:
        return self.test.statistic


def _solve(y: np.ndarray, x: np.ndarray, omega: float):
    """Least squares of y on [1, cos, sin] at one frequency -> (o, c1, c2, sse)."""
    A = np.stack([np.ones_like(x), np.cos(omega * x), np.sin(omega * x)], axis=1)
    G = A.T @ A
    if np.linalg.cond(G) < 1e10:
        coef = np.linalg.solve(G, A.T @ y)
    else:  # omega near 0 or pi: sin column vanishes
        coef = np.linalg.lstsq(A, y, rcond=None)[0]
    r = y - A @ coef
    return coef[0], coef[1], coef[2], float(r @ r)


def fit_sinusoid(series, sample_rate: float | None = None, refine: bool = True, tol: float = 1e-12) -> SineFit:
    """Global least-squares sinusoid fit over the window's DFT bin grid.

    Every bin 1..n//2 gets a linear solve; bin 0 is the constant-only fit.
    With ``refine`` a bounded 1-D search between the neighbouring bins of the
    best one (at least half a bin above 0) is tried and kept only if it
    lowers the error. Flat input (std
    below ``tol``) returns amplitude 0, offset = mean, mse 0, flagged.
    """
    y = np.asarray(series, dtype=np.float64).ravel()
    n = y.size
    if n < 4:
        raise ValueError("sinusoid fit needs at least 4 samples")
    fs = 1.0 if sample_rate is None else float(sample_rate)
    mean = float(y.mean())
    if y.std() <= tol * (1.0 + abs(mean)):
        return SineFit(mean, 0.0, 0.0, 0.0, 0.0, 0.0, 0, False, True)
    x = np.arange(n, dtype=np.float64)

    # On the bin grid 1, cos and sin are orthogonal, so the per-bin linear
    # solve reduces to scaled DFT coefficients.
    sst = float(np.sum((y - mean) ** 2))
    X = np.fft.rfft(y)[1:]
    scale = np.full(X.size, 2.0 / n)
    if n % 2 == 0:
        scale[-1] = 1.0 / n
    c1s, c2s = scale * X.real, -scale * X.imag
    sses = sst - (1.0 / scale) * (c1s**2 + c2s**2)
    j = int(np.argmin(sses))
    if sses[j] < sst:
        w = 2 * np.pi * (j + 1) / n
        r = y - (mean + c1s[j] * np.cos(w * x) + c2s[j] * np.sin(w * x))
        best = (float(r @ r), mean, float(c1s[j]), float(c2s[j]), w, j + 1)
    else:
        best = (sst, mean, 0.0, 0.0, 0.0, 0)
    sse, o, c1, c2, w, k = best
    refined = False
    if refine and k > 0:
        # never below half the first bin: near omega = 0 the model degenerates
        # into a polynomial and stops being a sinusoid fit
        lo = max(2 * np.pi * (k - 1) / n, np.pi / n)
        hi = min(np.pi, 2 * np.pi * (k + 1) / n)
        res = minimize_scalar(lambda om: _solve(y, x, om)[3], bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10})
        o2, d1, d2, sse2 = _solve(y, x, float(res.x))
        if sse2 < sse * (1 - 1e-9) - 1e-15 * sst:
            sse, o, c1, c2, w, refined = sse2, o2, d1, d2, float(res.x), True
    amp = math.hypot(c1, c2)
    theta = float(wrap_phase(math.atan2(-c2, c1))) if amp > 0 else 0.0
    return SineFit(float(o), amp, float(w), w / (2 * np.pi) * fs, theta, max(sse, 0.0) / n, int(k), refined, False)


def fit_linear(series) -> LinearFit:
    y = np.asarray(series, dtype=np.float64).ravel()
    n = y.size
    if n < 2:
        raise ValueError("linear fit needs at least 2 samples")
    x = np.arange(n, dtype=np.float64)
    xc = x - x.mean()
    m = float(xc @ (y - y.mean()) / (xc @ xc))
    b = float(y.mean() - m * x.mean())
    r = y - (m * x + b)
    return LinearFit(m, b, float(r @ r) / n)


def compare_fit_errors(sine_mse, linear_mse) -> FitComparison:
    """Paired comparison of sine vs line errors with a signed-rank test."""
    s = np.asarray(sine_mse, dtype=np.float64)
    l_ = np.asarray(linear_mse, dtype=np.float64)
    if s.shape != l_.shape or s.ndim != 1:
        raise ValueError("sine and linear errors must be equal-length 1-D sequences")
    if s.size < MIN_COMPARISON_PAIRS:
        raise ValueError(f"need at least {MIN_COMPARISON_PAIRS} pairs, got {s.size}")
    return FitComparison(s, l_, float(s.mean()), float(l_.mean()), wilcoxon_signed_rank(s, l_))


# --------------------------------------------------------------------------
# export

FIT_COLUMNS = ("layer", "filter", "o", "a", "freq_hz", "theta", "mse_sine", "m", "b", "mse_linear")


@dataclass
class FitRecord:
    layer: int
    filter: int
    sine: SineFit
    linear: LinearFit

    def row(self) -> list[str]:
        s, l_ = self.sine, self.linear
        vals = [s.offset, s.amplitude, s.frequency_hz, s.phase, s.mse, l_.slope, l_.intercept, l_.mse]
        return [str(self.layer), str(self.filter)] + [repr(float(v)) for v in vals]


def write_fits_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(FIT_COLUMNS)
        for r in records:
            w.writerow(r.row())
