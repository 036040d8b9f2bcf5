"""Real DFT analysis/synthesis and spectral-domain perturbations.

Normalization
-------------
The complex coefficients are the unnormalized forward DFT
``X_k = sum_t x_t exp(-2j*pi*k*t/T)`` for bins ``k = 0..T//2``; synthesis
scales by 1/T. :class:`Spectrum` stores *single-sided amplitudes* in signal
units::

    A_0 = |X_0| / T,   A_k = 2 |X_k| / T  (0 < k < T/2),   A_{T/2} = |X_{T/2}| / T

so ``cos(2*pi*k*t/T + theta)`` has amplitude 1 and phase theta at bin k.
Parseval then reads ``sum x_t**2 = T * sum_k w_k A_k**2`` with ``w_0 = 1``,
``w_k = 1/2`` and ``w_{T/2} = 1`` (even T); see :func:`parseval_weights`.

Bin ``k`` corresponds to ``k * sample_rate / T`` Hz.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal import Trial


@dataclass
class Spectrum:
    amplitudes: np.ndarray  # (..., bins), >= 0
    phases: np.ndarray  # (..., bins), in (-pi, pi]
    length: int
    sample_rate: float = 1.0

    def __post_init__(self) -> None:
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.float64)
        self.phases = np.asarray(self.phases, dtype=np.float64)
        if self.amplitudes.shape != self.phases.shape:
            raise ValueError("amplitudes and phases must have the same shape")
        if self.amplitudes.shape[-1] != self.length // 2 + 1:
            raise ValueError(f"{self.amplitudes.shape[-1]} bins inconsistent with length {self.length}")
        if not (np.all(np.isfinite(self.amplitudes)) and np.all(np.isfinite(self.phases))):
            raise ValueError("spectrum entries must be finite")
        if np.any(self.amplitudes < 0):
            raise ValueError("amplitudes must be non-negative")

    @property
    def n_bins(self) -> int:
        return self.amplitudes.shape[-1]

    @property
    def frequencies(self) -> np.ndarray:
        return bin_frequencies(self.length, self.sample_rate)

    def coefficients(self) -> np.ndarray:
        """Unnormalized complex rfft coefficients reproducing this spectrum."""
        return self.amplitudes * _amp_to_coef(self.length) * np.exp(1j * self.phases)


def bin_frequencies(length: int, sample_rate: float = 1.0) -> np.ndarray:
    return np.arange(length // 2 + 1) * (sample_rate / length)


def _amp_to_coef(T: int) -> np.ndarray:
    scale = np.full(T // 2 + 1, T / 2.0)
    scale[0] = T
    if T % 2 == 0:
        scale[-1] = T
    return scale


def parseval_weights(T: int) -> np.ndarray:
    w = np.full(T // 2 + 1, 0.5)
    w[0] = 1.0
    if T % 2 == 0:
        w[-1] = 1.0
    return w


def wrap_phase(p):
    """Wrap angles into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(p, dtype=np.float64), 2 * np.pi)


def real_bins(T: int) -> np.ndarray:
    """Indices of bins whose coefficient is constrained to be real (DC, Nyquist)."""
    return np.array([0, T // 2]) if T % 2 == 0 else np.array([0])


def _unwrap_input(x):
    if isinstance(x, Trial):
        return x.data, x.sample_rate
    return np.asarray(x), None


def dft_forward(x, sample_rate: float | None = None) -> Spectrum:
    """Spectrum of a trial or an array with time on the last axis."""
    data, rate = _unwrap_input(x)
    if sample_rate is None:
        sample_rate = rate if rate is not None else 1.0
    data = np.asarray(data, dtype=np.float64)
    T = data.shape[-1]
    if T < 2:
        raise ValueError("need at least 2 time samples")
    if not np.all(np.isfinite(data)):
        raise ValueError("input contains non-finite samples")
    X = np.fft.rfft(data, axis=-1)
    amps = np.abs(X) / _amp_to_coef(T)
    # real-valued bins: sign carried by the phase (0 or pi)
    rb = real_bins(T)
    phases = np.angle(X)
    phases[..., rb] = np.where(X[..., rb].real < 0, np.pi, 0.0)
    return Spectrum(amps, wrap_phase(phases), T, float(sample_rate))


def dft_inverse(spectrum: Spectrum) -> np.ndarray:
    if spectrum.n_bins != spectrum.length // 2 + 1:
        raise ValueError("inconsistent bins/length")
    return np.fft.irfft(spectrum.coefficients(), n=spectrum.length, axis=-1)


def _rewrap_output(x, out):
    if isinstance(x, Trial):
        return Trial(out, x.sample_rate, x.label)
    return out


@dataclass
class AmplitudePerturbation:
    """Multiplicative per-bin amplitude factors, shaped (..., channels, bins)."""

    factors: np.ndarray

    def __post_init__(self) -> None:
        self.factors = np.asarray(self.factors, dtype=np.float64)
        if not np.all(np.isfinite(self.factors)) or np.any(self.factors <= 0):
            raise ValueError("amplitude factors must be finite and > 0")


@dataclass
class PhasePerturbation:
    """Per-bin phase shifts in radians, shaped (..., bins), shared across channels."""

    shifts: np.ndarray

    def __post_init__(self) -> None:
        s = np.asarray(self.shifts, dtype=np.float64)
        if not np.all(np.isfinite(s)):
            raise ValueError("phase shifts must be finite")
        self.shifts = wrap_phase(s)


def apply_amplitude_perturbation(x, pert) -> np.ndarray | Trial:
    """Scale every amplitude by its factor, keep phases, resynthesize.

    ``pert`` is an :class:`AmplitudePerturbation` or a factor array whose shape
    equals the spectrum shape (..., channels, bins).
    """
    factors = pert.factors if isinstance(pert, AmplitudePerturbation) else AmplitudePerturbation(pert).factors
    data, _ = _unwrap_input(x)
    data = np.asarray(data, dtype=np.float64)
    T = data.shape[-1]
    bins_shape = data.shape[:-1] + (T // 2 + 1,)
    if factors.shape != bins_shape:
        raise ValueError(f"factor shape {factors.shape} does not match spectrum shape {bins_shape}")
    X = np.fft.rfft(data, axis=-1)
    out = np.fft.irfft(X * factors, n=T, axis=-1)
    return _rewrap_output(x, out)


def apply_phase_perturbation(x, pert) -> np.ndarray | Trial:
    """Advance the phase of every channel at bin k by ``shifts[..., k]``.

    Shifts broadcast over the channel axis. Shifts at the real-valued bins
    (DC and, for even T, Nyquist) are ignored because those coefficients
    cannot carry an arbitrary phase in a real signal.
    """
    shifts = pert.shifts if isinstance(pert, PhasePerturbation) else PhasePerturbation(pert).shifts
    data, _ = _unwrap_input(x)
    data = np.asarray(data, dtype=np.float64)
    T = data.shape[-1]
    nb = T // 2 + 1
    if shifts.shape[-1] != nb:
        raise ValueError(f"{shifts.shape[-1]} shifts given for {nb} bins")
    # (..., bins) -> (..., 1, bins) so one shift applies to all channels
    lead = data.shape[:-2]
    if shifts.ndim == 1:
        s = shifts
    else:
        if shifts.shape[:-1] != lead:
            raise ValueError(f"shift shape {shifts.shape} does not match leading dims {lead}")
        s = shifts[..., None, :]
    rot = np.exp(1j * s)
    rot[..., real_bins(T)] = 1.0
    X = np.fft.rfft(data, axis=-1)
    out = np.fft.irfft(X * rot, n=T, axis=-1)
    return _rewrap_output(x, out)


def sample_amplitude_factors(rng: np.random.Generator, shape, sigma: float = 0.02, floor: float = 1e-6) -> np.ndarray:
    """Factors ~ N(1, sigma**2), clamped below at ``floor``."""
    return np.maximum(rng.normal(1.0, sigma, size=shape), floor)


def sample_phase_shifts(
    rng: np.random.Generator, shape, sigma: float = np.pi, n_times: int | None = None
) -> np.ndarray:
    """Shifts ~ N(0, sigma**2) wrapped into (-pi, pi].

    The DC bin (and the Nyquist bin when ``n_times`` is even) is set to 0.
    """
    s = wrap_phase(rng.normal(0.0, sigma, size=shape))
    s[..., 0] = 0.0
    if n_times is not None and n_times % 2 == 0:
        s[..., -1] = 0.0
    return s


def band_power(x, sample_rate: float, band: tuple[float, float]) -> np.ndarray:
    """Sum of squared single-sided amplitudes over bins within [low, high] Hz."""
    spec = dft_forward(x, sample_rate)
    f = spec.frequencies
    sel = (f >= band[0]) & (f <= band[1])
    return (spec.amplitudes[..., sel] ** 2).sum(axis=-1)
