"""Trials, datasets, synthetic EEG generation, preprocessing and dataset files.

Binary dataset layout (all integers little-endian)::

    offset  size  content
    0       8     magic b"CVPRDSET"
    8       4     uint32 format version (currently 1)
    12      8     uint64 header length H in bytes
    20      H     UTF-8 JSON header: n_trials, channels, time, sample_rate,
                  n_classes, labels, metadata, dtype ("<f4")
    20+H    ...   float32 samples, trial by trial, each trial channel-major
                  (all samples of channel 0, then channel 1, ...)

Random streams: every stochastic routine takes an integer seed. Trial ``i``
draws from ``PCG64(SeedSequence(seed, spawn_key=(i,)))`` so the result does
not depend on generation order or parallelism.
"""

from __future__ import annotations

import json
import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Sequence

import numpy as np

DATASET_MAGIC = b"CVPRDSET"
DATASET_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


class ConfigError(ValueError):
    """Invalid synthetic-data configuration."""


class DatasetFormatError(ValueError):
    """Base class for dataset file load errors."""


class MalformedHeaderError(DatasetFormatError):
    pass


class TruncatedPayloadError(DatasetFormatError):
    pass


class VersionMismatchError(DatasetFormatError):
    pass


class DegenerateReferenceWarning(RuntimeWarning):
    """Common average reference of a single-channel trial is identically zero."""


@dataclass
class Trial:
    """One labeled multichannel segment, ``data`` shaped (channels, time)."""

    data: np.ndarray
    sample_rate: float
    label: int = 0

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data)
        if self.data.ndim != 2 or min(self.data.shape) < 1:
            raise ValueError(f"trial data must be (channels, time) with both >= 1, got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("trial data contains non-finite samples")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if int(self.label) < 0:
            raise ValueError("label must be non-negative")
        self.label = int(self.label)

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_times(self) -> int:
        return self.data.shape[1]


@dataclass
class Dataset:
    """Ordered collection of equally shaped trials.

    Stored as one (n_trials, channels, time) array for vectorized processing;
    iterate or index to get :class:`Trial` objects.
    """

    data: np.ndarray
    labels: np.ndarray
    sample_rate: float
    n_classes: int
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.data.ndim != 3 or min(self.data.shape[1:], default=0) < 1:
            raise ValueError(f"dataset data must be (trials, channels, time), got {self.data.shape}")
        if self.labels.shape != (self.data.shape[0],):
            raise ValueError("one label per trial required")
        if self.n_classes < 1:
            raise ValueError("n_classes must be positive")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError("labels must lie in [0, n_classes)")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("dataset contains non-finite samples")

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, i: int) -> Trial:
        return Trial(self.data[i], self.sample_rate, int(self.labels[i]))

    def __iter__(self) -> Iterator[Trial]:
        for i in range(len(self)):
            yield self[i]

    @property
    def trials(self) -> list[Trial]:
        return list(self)

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def n_times(self) -> int:
        return self.data.shape[2]

    @classmethod
    def from_trials(cls, trials: Sequence[Trial], n_classes: int, metadata: dict | None = None) -> "Dataset":
        if not trials:
            raise ValueError("at least one trial required")
        rates = {t.sample_rate for t in trials}
        shapes = {t.data.shape for t in trials}
        if len(rates) != 1 or len(shapes) != 1:
            raise ValueError("all trials must share shape and sample_rate")
        return cls(
            np.stack([t.data for t in trials]),
            np.array([t.label for t in trials]),
            trials[0].sample_rate,
            n_classes,
            dict(metadata or {}),
        )

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(self.data[index], self.labels[index], self.sample_rate, self.n_classes, dict(self.metadata))

    def with_data(self, data: np.ndarray) -> "Dataset":
        return Dataset(data, self.labels.copy(), self.sample_rate, self.n_classes, dict(self.metadata))


# --------------------------------------------------------------------------
# synthetic generation


@dataclass
class BandRule:
    """Band-limited oscillation planted in a class.

    ``amplitude`` is the time-domain cosine amplitude summed over the band,
    before ``multiplier`` is applied; per-bin amplitude is amplitude /
    sqrt(number of bins in band) so band RMS does not depend on bandwidth.
    """

    band: tuple[float, float]
    channels: list[int] | None = None
    multiplier: float = 1.0
    phase_locked: bool = False
    amplitude: float = 1.0

    @classmethod
    def from_dict(cls, d: dict) -> "BandRule":
        return cls(
            band=(float(d["band"][0]), float(d["band"][1])),
            channels=None if d.get("channels") is None else [int(c) for c in d["channels"]],
            multiplier=float(d.get("multiplier", 1.0)),
            phase_locked=bool(d.get("phase_locked", False)),
            amplitude=float(d.get("amplitude", 1.0)),
        )

    def to_dict(self) -> dict:
        return {
            "band": list(self.band),
            "channels": self.channels,
            "multiplier": self.multiplier,
            "phase_locked": self.phase_locked,
            "amplitude": self.amplitude,
        }


@dataclass
class SynthConfig:
    """Synthetic band-modulated EEG configuration.

    Background noise has an expected amplitude spectrum proportional to
    1/f**noise_slope (complex Gaussian Fourier coefficients, hence uniform
    random phases), scaled to time-domain standard deviation ``noise_level``.
    ``class_rules[k]`` lists the oscillations planted in every trial of class k.
    """

    n_trials: int = 100
    channels: int = 8
    duration: float = 2.088
    sample_rate: float = 250.0
    noise_level: float = 1.0
    noise_slope: float = 1.0
    class_rules: list[list[BandRule]] = field(
        default_factory=lambda: [
            [BandRule((8.0, 12.0), [0, 1, 2], 1.0, amplitude=1.5)],
            [BandRule((8.0, 12.0), [0, 1, 2], 2.0, amplitude=1.5)],
        ]
    )

    @property
    def n_classes(self) -> int:
        return len(self.class_rules)

    @property
    def n_times(self) -> int:
        return int(round(self.duration * self.sample_rate))

    def validate(self) -> None:
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        if self.channels < 1:
            raise ConfigError("channels must be >= 1")
        if not self.sample_rate > 0 or self.n_times < 2:
            raise ConfigError("sample_rate and duration must give at least 2 samples")
        if self.noise_level < 0:
            raise ConfigError("noise_level must be >= 0")
        if not self.class_rules:
            raise ConfigError("at least one class required")
        nyq = self.sample_rate / 2
        freqs = np.fft.rfftfreq(self.n_times, 1.0 / self.sample_rate)
        for k, rules in enumerate(self.class_rules):
            for j, r in enumerate(rules):
                lo, hi = r.band
                where = f"class_rules[{k}][{j}]"
                if not (0 < lo < hi < nyq):
                    raise ConfigError(f"{where}: band {r.band} must satisfy 0 < low < high < Nyquist ({nyq} Hz)")
                if not r.multiplier > 0:
                    raise ConfigError(f"{where}: multiplier must be > 0")
                if r.amplitude < 0:
                    raise ConfigError(f"{where}: amplitude must be >= 0")
                if not np.any((freqs >= lo) & (freqs <= hi)):
                    raise ConfigError(f"{where}: band {r.band} contains no DFT bin")
                if r.channels is not None and any(not 0 <= c < self.channels for c in r.channels):
                    raise ConfigError(f"{where}: channel index out of range")

    def to_dict(self) -> dict:
        return {
            "n_trials": self.n_trials,
            "channels": self.channels,
            "duration": self.duration,
            "sample_rate": self.sample_rate,
            "noise_level": self.noise_level,
            "noise_slope": self.noise_slope,
            "class_rules": [[r.to_dict() for r in rules] for rules in self.class_rules],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        if "class_rules" in d:
            d["class_rules"] = [[BandRule.from_dict(r) for r in rules] for rules in d["class_rules"]]
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown synth fields: {sorted(unknown)}")
        return cls(**d)


def trial_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for trial ``index`` under base ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(index),))))


def _rule_rng(seed: int, cls: int, rule: int) -> np.random.Generator:
    # two-element keys offset by 2**32 never collide with per-trial keys
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(2**32 + cls, rule))))


def generate_synthetic_dataset(cfg: SynthConfig, seed: int) -> Dataset:
    cfg.validate()
    T, C, fs = cfg.n_times, cfg.channels, cfg.sample_rate
    n_bins = T // 2 + 1
    freqs = np.fft.rfftfreq(T, 1.0 / fs)

    # background: expected |X_k| ∝ f^-slope on bins 1..n_bins-1, no DC, no Nyquist
    shape = np.zeros(n_bins)
    shape[1:] = freqs[1:] ** (-cfg.noise_slope)
    if T % 2 == 0:
        shape[-1] = 0.0
    norm = math.sqrt(2.0 * float(np.sum(shape**2)))
    noise_scale = cfg.noise_level * T / norm if norm > 0 else 0.0

    # fixed phases for phase-locked rules, shared by all trials of the class
    locked: dict[tuple[int, int], np.ndarray] = {}
    for k, rules in enumerate(cfg.class_rules):
        for j, r in enumerate(rules):
            if r.phase_locked:
                locked[(k, j)] = _rule_rng(seed, k, j).uniform(-np.pi, np.pi, n_bins)

    n_total = cfg.n_trials * cfg.n_classes
    data = np.empty((n_total, C, T), dtype=np.float32)
    labels = np.arange(n_total) % cfg.n_classes
    for i in range(n_total):
        rng = trial_rng(seed, i)
        k = int(labels[i])
        coef = (rng.standard_normal((C, n_bins)) + 1j * rng.standard_normal((C, n_bins))) / math.sqrt(2.0)
        spec = coef * (shape * noise_scale)
        for j, r in enumerate(cfg.class_rules[k]):
            in_band = (freqs >= r.band[0]) & (freqs <= r.band[1])
            nb = int(in_band.sum())
            amp = r.amplitude * r.multiplier / math.sqrt(nb)
            phases = locked[(k, j)] if r.phase_locked else rng.uniform(-np.pi, np.pi, n_bins)
            tone = np.where(in_band, amp * T / 2.0 * np.exp(1j * phases), 0.0)
            chans = range(C) if r.channels is None else r.channels
            for c in chans:
                spec[c] += tone
        data[i] = np.fft.irfft(spec, n=T, axis=-1).astype(np.float32)

    meta = {"generator": "convprobe.synthetic", "seed": int(seed), "config": cfg.to_dict()}
    return Dataset(data, labels, fs, cfg.n_classes, meta)


# --------------------------------------------------------------------------
# preprocessing


def common_average_reference(x):
    """Subtract the across-channel mean at every time point.

    Accepts a :class:`Trial`, a :class:`Dataset`, or an array with channels on
    axis -2. Single-channel input gives all zeros and a
    :class:`DegenerateReferenceWarning`.
    """
    if isinstance(x, Trial):
        return Trial(common_average_reference(x.data), x.sample_rate, x.label)
    if isinstance(x, Dataset):
        return x.with_data(common_average_reference(x.data))
    a = np.asarray(x)
    if a.ndim < 2:
        raise ValueError("input must have a channel axis")
    if a.shape[-2] == 1:
        warnings.warn("common average reference of a single channel is zero", DegenerateReferenceWarning, stacklevel=2)
    return a - a.mean(axis=-2, keepdims=True, dtype=np.float64).astype(a.dtype)


def crop_sliding(x, window: int, stride: int = 1) -> list:
    """Contiguous crops of ``window`` samples starting at 0, stride, 2*stride, ...

    Returns a list of Trials for Trial input, else a list of array views.
    """
    arr = x.data if isinstance(x, Trial) else np.asarray(x)
    T = arr.shape[-1]
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be >= 1")
    if window > T:
        raise ValueError(f"window {window} exceeds trial length {T}")
    starts = range(0, T - window + 1, stride)
    crops = [arr[..., s : s + window] for s in starts]
    if isinstance(x, Trial):
        return [Trial(c, x.sample_rate, x.label) for c in crops]
    return crops


def crop_offsets(n_times: int, window: int, stride: int = 1) -> np.ndarray:
    if window > n_times:
        raise ValueError(f"window {window} exceeds trial length {n_times}")
    return np.arange(0, n_times - window + 1, stride)


# --------------------------------------------------------------------------
# file I/O


def save_dataset(path, ds: Dataset) -> None:
    header = {
        "n_trials": len(ds),
        "channels": ds.n_channels,
        "time": ds.n_times,
        "sample_rate": float(ds.sample_rate),
        "n_classes": int(ds.n_classes),
        "labels": [int(v) for v in ds.labels],
        "metadata": ds.metadata,
        "dtype": "<f4",
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = np.ascontiguousarray(ds.data, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_PREFIX.pack(DATASET_MAGIC, DATASET_VERSION, len(hbytes)))
        fh.write(hbytes)
        fh.write(payload)


def load_dataset(path) -> Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size:
        raise MalformedHeaderError("file too short for dataset header")
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise MalformedHeaderError(f"bad magic bytes {magic!r}")
    if version != DATASET_VERSION:
        raise VersionMismatchError(f"dataset format version {version}, expected {DATASET_VERSION}")
    start = _PREFIX.size
    if start + hlen > len(raw):
        raise MalformedHeaderError("header length exceeds file size")
    try:
        header = json.loads(raw[start : start + hlen].decode("utf-8"))
        n, C, T = int(header["n_trials"]), int(header["channels"]), int(header["time"])
        labels = header["labels"]
        fs, n_classes = float(header["sample_rate"]), int(header["n_classes"])
        metadata = header.get("metadata", {})
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise MalformedHeaderError(f"unreadable header: {exc}") from exc
    if header.get("dtype", "<f4") != "<f4":
        raise MalformedHeaderError(f"unsupported sample dtype {header.get('dtype')!r}")
    if len(labels) != n:
        raise MalformedHeaderError("label count does not match n_trials")
    expected = n * C * T * 4
    payload = raw[start + hlen :]
    if len(payload) < expected:
        raise TruncatedPayloadError(f"payload has {len(payload)} bytes, header declares {expected}")
    if len(payload) > expected:
        raise MalformedHeaderError(f"payload has {len(payload) - expected} trailing bytes")
    data = np.frombuffer(payload, dtype="<f4").reshape(n, C, T).astype(np.float32)
    return Dataset(data, np.array(labels, dtype=np.int64), fs, n_classes, metadata)
