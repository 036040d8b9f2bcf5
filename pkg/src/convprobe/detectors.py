"""Analytically constructed models used as verification oracles.

They expose the same probing interface as :class:`~convprobe.network.Network`
(``analysis_layers``, ``window``, ``channels``, ``n_filters``,
``activations``, ``receptive_field``), each with one analysis layer holding
one filter whose units are the valid positions of a template of length L.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .network import ReceptiveField


class _TemplateModel:
    analysis_layers = (1,)

    def __init__(self, channels: int, window: int, length: int):
        if not 1 <= length <= window:
            raise ValueError("template length must lie in [1, window]")
        self.channels = int(channels)
        self.window = int(window)
        self.length = int(length)

    def n_filters(self, layer: int) -> int:
        self._check(layer)
        return 1

    def n_units(self, layer: int) -> int:
        self._check(layer)
        return self.window - self.length + 1

    def receptive_field(self, layer, unit: int) -> ReceptiveField:
        self._check(layer)
        if not 0 <= unit < self.n_units(layer):
            raise ValueError(f"unit {unit} out of range")
        return ReceptiveField(int(unit), int(unit) + self.length)

    def _check(self, layer) -> None:
        if layer != 1:
            raise ValueError(f"unknown analysis layer {layer!r}; valid: (1,)")

    def _prepare(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if x.shape[1:] != (self.channels, self.window):
            raise ValueError(f"input shape {x.shape} does not match ({self.channels}, {self.window})")
        return np.ascontiguousarray(x)

    def activations(self, x, layers=(1,)) -> dict[int, np.ndarray]:
        for l in layers:
            self._check(l)
        return {1: self._filter(self._prepare(x))}


class QuadratureDetector(_TemplateModel):
    """Phase-invariant band-power detector.

    Each channel is correlated with cosine and sine templates at
    ``frequency`` Hz; the unit activation is the channel-average of
    ``(cos_response**2 + sin_response**2) / length**2``.
    """

    def __init__(self, frequency: float, sample_rate: float, length: int, channels: int = 1, window: int = 522):
        super().__init__(channels, window, length)
        k = np.arange(self.length)
        w = 2 * np.pi * frequency / sample_rate
        self.frequency = float(frequency)
        self._templates = np.stack([np.cos(w * k), np.sin(w * k)])  # (2, L)

    def _filter(self, x: np.ndarray) -> np.ndarray:
        B, C, T = x.shape
        flat = x.reshape(B * C, 1, T)
        w = self._templates[:, None, :]
        resp = kernels.conv1d_forward(flat, w, np.zeros(2))  # (B*C, 2, U)
        power = (resp**2).sum(axis=1).reshape(B, C, -1) / self.length**2
        return power.mean(axis=1, keepdims=True)


class MatchedFilter(_TemplateModel):
    """Linear template correlator, averaged over channels (or weighted)."""

    def __init__(self, template, channels: int = 1, window: int = 522, channel_weights=None):
        template = np.asarray(template, dtype=np.float64)
        super().__init__(channels, window, template.size)
        self.template = template
        cw = np.full(self.channels, 1.0 / self.channels) if channel_weights is None else np.asarray(channel_weights, float)
        if cw.shape != (self.channels,):
            raise ValueError("one weight per channel required")
        self.channel_weights = cw

    def _filter(self, x: np.ndarray) -> np.ndarray:
        w = self.channel_weights[None, :, None] * self.template[None, None, :]
        return kernels.conv1d_forward(x, w, np.zeros(1))


def cosine_template(frequency: float, sample_rate: float, length: int, phase: float = 0.0) -> np.ndarray:
    return np.cos(2 * np.pi * frequency / sample_rate * np.arange(length) + phase)
