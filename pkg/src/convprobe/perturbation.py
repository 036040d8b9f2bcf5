"""Frequency-resolved amplitude and phase perturbation correlations per layer.

Amplitude: every trial's spectrum is scaled bin-, channel- and trial-wise by
factors ~ N(1, sigma**2); a filter's response is the mean over units of
(original - perturbed) activation; its Pearson correlation over trials with
each (bin, channel) factor is taken in absolute value and averaged over
filters, channels, repetitions (and models).

Phase: one shift ~ N(0, sigma**2) (wrapped) per trial and bin, shared by all
channels; a filter's response is the correlation over units between original
and perturbed activations; it is correlated over trials with the shift
statistic (|shift| by default, or the signed shift) per (bin, filter).

Random streams: repetition ``r`` of trial ``i`` draws from
``SeedSequence(seed, spawn_key=(kind, r, i))`` with kind 1 for amplitude and
2 for phase, so results do not depend on batching.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .signal import Dataset, crop_offsets
from .spectral import (
    apply_amplitude_perturbation,
    apply_phase_perturbation,
    bin_frequencies,
    sample_amplitude_factors,
    sample_phase_shifts,
)
from .stats import pearson_columns, pearson_rows

DEFAULT_BANDS: dict[str, tuple[float, float]] = {
    "alpha": (7.0, 13.0),
    "beta": (13.0, 30.0),
    "high_gamma": (50.0, 100.0),
}
MIN_TRIALS = 3
_AMPLITUDE, _PHASE = 1, 2


class StatisticsError(ValueError):
    """Too few trials for a correlation over trials."""


@dataclass
class PerturbationRunConfig:
    layers: tuple[int, ...] | None = None  # None: every analysis layer
    repetitions: int = 5
    amplitude_sigma: float = 0.02
    phase_sigma: float = math.pi
    phase_statistic: str = "abs"  # "abs" or "signed"
    seed: int = 0
    mode: str = "simultaneous"  # or "per_band"
    bands: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_BANDS))
    multi_crop: bool = False
    crop_stride: int = 1
    batch_size: int = 64
    keep_raw: bool = False
    amplitude_floor: float = 1e-6

    def validate(self) -> None:
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.amplitude_sigma > 0:
            raise ValueError("amplitude_sigma must be > 0")
        if not self.phase_sigma > 0:
            raise ValueError("phase_sigma must be > 0")
        if self.phase_statistic not in ("abs", "signed"):
            raise ValueError("phase_statistic must be 'abs' or 'signed'")
        if self.mode not in ("simultaneous", "per_band"):
            raise ValueError("mode must be 'simultaneous' or 'per_band'")
        if self.crop_stride < 1 or self.batch_size < 1:
            raise ValueError("crop_stride and batch_size must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layers"] = None if self.layers is None else list(self.layers)
        d["bands"] = {k: list(v) for k, v in self.bands.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PerturbationRunConfig":
        d = dict(d)
        if d.get("layers") is not None:
            d["layers"] = tuple(int(l) for l in d["layers"])
        if "bands" in d:
            d["bands"] = {k: (float(v[0]), float(v[1])) for k, v in d["bands"].items()}
        return cls(**d)


@dataclass
class CorrelationTable:
    """Mean absolute perturbation correlations indexed by (layer, bin).

    ``n_amp``/``n_phase`` count the raw correlations averaged into each entry
    (degenerate ones included as 0); ``n_deg_*`` count the degenerate ones.
    Either correlation type may be absent (None) when not computed.

    ``null_*`` hold the same statistic computed after a seeded trial
    permutation of the responses, i.e. the level reached by chance with this
    many trials (about sqrt(2 / (pi * n_trials)) for unrelated signals).
    """

    layers: tuple[int, ...]
    bins: np.ndarray
    frequencies: np.ndarray
    rho_amp: np.ndarray | None = None
    rho_phase: np.ndarray | None = None
    n_amp: np.ndarray | None = None
    n_deg_amp: np.ndarray | None = None
    n_phase: np.ndarray | None = None
    n_deg_phase: np.ndarray | None = None
    null_amp: np.ndarray | None = None
    null_phase: np.ndarray | None = None
    raw: dict = field(default_factory=dict)

    def layer_index(self, layer: int) -> int:
        return self.layers.index(layer)

    def bin_of(self, freq_hz: float) -> int:
        """Table column of the bin nearest ``freq_hz``."""
        return int(np.argmin(np.abs(self.frequencies - freq_hz)))

    def layer_mean(self, kind: str) -> np.ndarray:
        """Bin-averaged correlation per layer."""
        return self._values(kind).mean(axis=1)

    def band_mean(self, kind: str, band: tuple[float, float]) -> np.ndarray:
        sel = (self.frequencies >= band[0]) & (self.frequencies <= band[1])
        if not sel.any():
            raise ValueError(f"no table bins within {band}")
        return self._values(kind)[:, sel].mean(axis=1)

    def excess(self, kind: str) -> np.ndarray:
        """Correlation above the permutation floor, clipped at 0."""
        null = {"amp": self.null_amp, "phase": self.null_phase}[kind]
        if null is None:
            raise ValueError(f"no {kind} permutation floor in this table")
        return np.maximum(self._values(kind) - null, 0.0)

    def band_excess(self, kind: str, band: tuple[float, float]) -> np.ndarray:
        """Band-mean correlation minus band-mean floor, clipped at 0."""
        sel = (self.frequencies >= band[0]) & (self.frequencies <= band[1])
        if not sel.any():
            raise ValueError(f"no table bins within {band}")
        self.excess(kind)  # availability check
        null = {"amp": self.null_amp, "phase": self.null_phase}[kind]
        return np.maximum(self._values(kind)[:, sel].mean(axis=1) - null[:, sel].mean(axis=1), 0.0)

    def _values(self, kind: str) -> np.ndarray:
        v = {"amp": self.rho_amp, "phase": self.rho_phase}[kind]
        if v is None:
            raise ValueError(f"{kind} correlations were not computed")
        return v

    def merge(self, other: "CorrelationTable") -> "CorrelationTable":
        """Combine an amplitude-only and a phase-only table over the same index."""
        _check_compatible([self, other])
        out = CorrelationTable(self.layers, self.bins, self.frequencies, raw={**self.raw, **other.raw})
        for name in ("rho_amp", "n_amp", "n_deg_amp", "null_amp", "rho_phase", "n_phase", "n_deg_phase", "null_phase"):
            a, b = getattr(self, name), getattr(other, name)
            if a is not None and b is not None:
                raise ValueError(f"both tables define {name}")
            setattr(out, name, a if a is not None else b)
        return out

    def rows(self) -> list[dict]:
        out = []
        for li, l in enumerate(self.layers):
            for bi, b in enumerate(self.bins):
                out.append({
                    "layer": l,
                    "bin_index": int(b),
                    "frequency_hz": float(self.frequencies[bi]),
                    "rho_amp": None if self.rho_amp is None else float(self.rho_amp[li, bi]),
                    "rho_phase": None if self.rho_phase is None else float(self.rho_phase[li, bi]),
                    "n_degenerate_amp": None if self.n_deg_amp is None else int(self.n_deg_amp[li, bi]),
                    "n_degenerate_phase": None if self.n_deg_phase is None else int(self.n_deg_phase[li, bi]),
                })
        return out


CSV_COLUMNS = ("layer", "bin_index", "frequency_hz", "rho_amp", "rho_phase", "n_degenerate_amp", "n_degenerate_phase")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_table_csv(path, table: CorrelationTable) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(CSV_COLUMNS)
        for row in table.rows():
            w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])


def read_table_csv(path) -> CorrelationTable:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError("empty correlation table")
    layers = tuple(sorted({int(r["layer"]) for r in rows}))
    bins = np.array(sorted({int(r["bin_index"]) for r in rows}))
    freq = {int(r["bin_index"]): float(r["frequency_hz"]) for r in rows}
    shape = (len(layers), len(bins))
    col = {b: i for i, b in enumerate(bins)}

    def grid(name, cast):
        if rows[0][name] == "":
            return None
        g = np.zeros(shape, dtype=cast)
        for r in rows:
            g[layers.index(int(r["layer"])), col[int(r["bin_index"])]] = cast(r[name])
        return g

    return CorrelationTable(
        layers, bins, np.array([freq[b] for b in bins]),
        rho_amp=grid("rho_amp", float), rho_phase=grid("rho_phase", float),
        n_deg_amp=grid("n_degenerate_amp", int), n_deg_phase=grid("n_degenerate_phase", int),
    )


# --------------------------------------------------------------------------
# aggregation


def aggregate_correlations(raw, degenerate=None, axis=None) -> tuple[np.ndarray, np.ndarray]:
    """Mean absolute correlation and degenerate count along ``axis``.

    Degenerate entries must already be 0 and contribute 0 to the mean.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.size == 0:
        raise ValueError("no correlations to aggregate")
    deg = np.zeros(raw.shape, dtype=bool) if degenerate is None else np.asarray(degenerate, dtype=bool)
    vals = np.where(deg, 0.0, np.abs(raw))
    return vals.mean(axis=axis), deg.sum(axis=axis)


def _check_compatible(tables) -> None:
    first = tables[0]
    for t in tables[1:]:
        if t.layers != first.layers or not np.array_equal(t.bins, first.bins):
            raise ValueError("tables have different (layer, bin) index sets")


def aggregate_tables(tables) -> CorrelationTable:
    """Count-weighted mean of several tables (e.g. one per model/subject)."""
    tables = list(tables)
    if not tables:
        raise ValueError("no tables to aggregate")
    _check_compatible(tables)
    first = tables[0]
    out = CorrelationTable(first.layers, first.bins, first.frequencies)
    for kind in ("amp", "phase"):
        rhos = [getattr(t, f"rho_{kind}") for t in tables]
        if any(r is None for r in rhos):
            continue
        counts = [getattr(t, f"n_{kind}") for t in tables]
        counts = [np.ones_like(r) if c is None else c for r, c in zip(rhos, counts)]
        total = np.sum(counts, axis=0)
        mean = np.sum([r * c for r, c in zip(rhos, counts)], axis=0) / total
        setattr(out, f"rho_{kind}", mean)
        nulls = [getattr(t, f"null_{kind}") for t in tables]
        if all(n is not None for n in nulls):
            setattr(out, f"null_{kind}", np.sum([n * c for n, c in zip(nulls, counts)], axis=0) / total)
        setattr(out, f"n_{kind}", total)
        degs = [getattr(t, f"n_deg_{kind}") for t in tables]
        if all(d is not None for d in degs):
            setattr(out, f"n_deg_{kind}", np.sum(degs, axis=0))
    return out


# --------------------------------------------------------------------------
# runs


def _rng(seed: int, kind: int, rep: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(kind, rep, trial))))


def _null_order(seed: int, kind: int, rep: int, n: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(kind, rep, 2**32))))
    return rng.permutation(n)


def _bin_groups(n_times: int, sample_rate: float, cfg: PerturbationRunConfig) -> list[np.ndarray]:
    nb = n_times // 2 + 1
    if cfg.mode == "simultaneous":
        return [np.arange(nb)]
    freqs = bin_frequencies(n_times, sample_rate)
    taken = np.zeros(nb, dtype=bool)
    groups = []
    for lo, hi in cfg.bands.values():
        sel = (freqs >= lo) & (freqs <= hi) & ~taken
        if sel.any():
            groups.append(np.flatnonzero(sel))
            taken |= sel
    if not groups:
        raise ValueError("no DFT bins fall inside the configured bands")
    return groups


class _Probe:
    """Shared plumbing: crop layout, batched activations, layer list."""

    def __init__(self, model, trials, cfg: PerturbationRunConfig, sample_rate: float | None):
        cfg.validate()
        if isinstance(trials, Dataset):
            sample_rate = trials.sample_rate if sample_rate is None else sample_rate
            trials = trials.data
        # without a rate, frequencies are in cycles per sample
        self.sample_rate = 1.0 if sample_rate is None else float(sample_rate)
        x = np.asarray(trials, dtype=np.float64)
        if x.ndim != 3:
            raise ValueError("trials must be (n_trials, channels, time)")
        if x.shape[0] < MIN_TRIALS:
            raise StatisticsError(f"need at least {MIN_TRIALS} trials for correlations over trials, got {x.shape[0]}")
        W = model.window
        if x.shape[1] != model.channels or x.shape[2] < W:
            raise ValueError(f"trials {x.shape[1:]} incompatible with model input ({model.channels}, {W})")
        if cfg.multi_crop:
            self.offsets = crop_offsets(x.shape[2], W, cfg.crop_stride)
        else:
            x = x[:, :, :W]
            self.offsets = np.array([0])
        self.x = np.ascontiguousarray(x)
        self.model = model
        self.cfg = cfg
        self.layers = tuple(model.analysis_layers if cfg.layers is None else cfg.layers)
        bad = set(self.layers) - set(model.analysis_layers)
        if bad:
            raise ValueError(f"unknown analysis layers {sorted(bad)}")

    @property
    def n_times(self) -> int:
        return self.x.shape[2]

    def activations(self, x: np.ndarray) -> dict[int, np.ndarray]:
        """Activations (n_trials, filters, n_crops * units) per layer."""
        W = self.model.window
        n = x.shape[0]
        out: dict[int, list] = {l: [] for l in self.layers}
        bs = self.cfg.batch_size
        for s in range(0, n, bs):
            chunk = x[s : s + bs]
            crops = np.concatenate([chunk[:, :, o : o + W] for o in self.offsets], axis=0)
            acts = self.model.activations(crops, self.layers)
            m = chunk.shape[0]
            for l in self.layers:
                a = np.asarray(acts[l], dtype=np.float64)
                # (n_crops * m, F, U) -> (m, F, n_crops * U)
                a = a.reshape(len(self.offsets), m, a.shape[1], a.shape[2]).transpose(1, 2, 0, 3)
                out[l].append(a.reshape(m, a.shape[1], -1))
        return {l: np.concatenate(v, axis=0) for l, v in out.items()}


def amplitude_perturbation_correlations(
    model, trials, cfg: PerturbationRunConfig | None = None, sample_rate: float | None = None
) -> CorrelationTable:
    cfg = cfg or PerturbationRunConfig()
    probe = _Probe(model, trials, cfg, sample_rate)
    x = probe.x
    N, C, T = x.shape
    nb = T // 2 + 1
    groups = _bin_groups(T, probe.sample_rate, cfg)
    bins = np.concatenate(groups)
    L = len(probe.layers)
    sums = np.zeros((L, bins.size))
    null_sums = np.zeros((L, bins.size))
    counts = np.zeros((L, bins.size), dtype=np.int64)
    degs = np.zeros((L, bins.size), dtype=np.int64)
    raw = {l: [] for l in probe.layers} if cfg.keep_raw else None
    base = probe.activations(x)
    base_mean = {l: a.mean(axis=2) for l, a in base.items()}

    col = 0
    for g in groups:
        for rep in range(cfg.repetitions):
            factors = np.ones((N, C, nb))
            for i in range(N):
                f = sample_amplitude_factors(_rng(cfg.seed, _AMPLITUDE, rep, i), (C, nb), cfg.amplitude_sigma, cfg.amplitude_floor)
                factors[i][:, g] = f[:, g]
            pert = probe.activations(apply_amplitude_perturbation(x, factors))
            p = factors[:, :, g].reshape(N, C * g.size)
            perm = _null_order(cfg.seed, _AMPLITUDE, rep, N)
            for li, l in enumerate(probe.layers):
                dy = base_mean[l] - pert[l].mean(axis=2)  # (N, F)
                r, deg = pearson_columns(p, dy)  # (C*nb_g, F)
                r = r.reshape(C, g.size, -1)
                deg = deg.reshape(C, g.size, -1)
                sums[li, col : col + g.size] += np.abs(r).sum(axis=(0, 2))
                r0, _ = pearson_columns(p, dy[perm])
                null_sums[li, col : col + g.size] += np.abs(r0).reshape(C, g.size, -1).sum(axis=(0, 2))
                counts[li, col : col + g.size] += r.shape[0] * r.shape[2]
                degs[li, col : col + g.size] += deg.sum(axis=(0, 2))
                if raw is not None:
                    raw[l].append(r)
        col += g.size

    table = _make_table(probe, bins, cfg)
    table.rho_amp, table.n_amp, table.n_deg_amp = sums / counts, counts, degs
    table.null_amp = null_sums / counts
    if raw is not None:
        table.raw["amp"] = raw
    return table


def phase_perturbation_correlations(
    model, trials, cfg: PerturbationRunConfig | None = None, sample_rate: float | None = None
) -> CorrelationTable:
    cfg = cfg or PerturbationRunConfig()
    probe = _Probe(model, trials, cfg, sample_rate)
    x = probe.x
    N, C, T = x.shape
    nb = T // 2 + 1
    groups = _bin_groups(T, probe.sample_rate, cfg)
    bins = np.concatenate(groups)
    L = len(probe.layers)
    sums = np.zeros((L, bins.size))
    null_sums = np.zeros((L, bins.size))
    counts = np.zeros((L, bins.size), dtype=np.int64)
    degs = np.zeros((L, bins.size), dtype=np.int64)
    raw = {"shifts": [], "activation_corr": {l: [] for l in probe.layers}, "corr": {l: [] for l in probe.layers}}
    keep = cfg.keep_raw
    base = probe.activations(x)

    col = 0
    for g in groups:
        for rep in range(cfg.repetitions):
            shifts = np.zeros((N, nb))
            for i in range(N):
                s = sample_phase_shifts(_rng(cfg.seed, _PHASE, rep, i), nb, cfg.phase_sigma, T)
                shifts[i, g] = s[g]
            pert = probe.activations(apply_phase_perturbation(x, shifts))
            stat = np.abs(shifts[:, g]) if cfg.phase_statistic == "abs" else shifts[:, g]
            perm = _null_order(cfg.seed, _PHASE, rep, N)
            if keep:
                raw["shifts"].append(shifts[:, g])
            for li, l in enumerate(probe.layers):
                rho_y, _ = pearson_rows(base[l], pert[l])  # (N, F)
                r, deg = pearson_columns(stat, rho_y)  # (nb_g, F)
                sums[li, col : col + g.size] += np.abs(r).sum(axis=1)
                r0, _ = pearson_columns(stat, rho_y[perm])
                null_sums[li, col : col + g.size] += np.abs(r0).sum(axis=1)
                counts[li, col : col + g.size] += r.shape[1]
                degs[li, col : col + g.size] += deg.sum(axis=1)
                if keep:
                    raw["activation_corr"][l].append(rho_y)
                    raw["corr"][l].append(r)
        col += g.size

    table = _make_table(probe, bins, cfg)
    table.rho_phase, table.n_phase, table.n_deg_phase = sums / counts, counts, degs
    table.null_phase = null_sums / counts
    if keep:
        table.raw["phase"] = raw
    return table


def _make_table(probe: _Probe, bins: np.ndarray, cfg: PerturbationRunConfig) -> CorrelationTable:
    freqs = bin_frequencies(probe.n_times, probe.sample_rate)[bins]
    return CorrelationTable(probe.layers, bins, freqs)


def perturbation_correlations(
    models,
    trials,
    cfg: PerturbationRunConfig | None = None,
    sample_rate: float | None = None,
    amplitude: bool = True,
    phase: bool = True,
) -> CorrelationTable:
    """Amplitude and/or phase tables for one model or a list of models.

    Several models (e.g. one per subject) are combined with
    :func:`aggregate_tables`; every model sees the same perturbations.
    """
    if not (amplitude or phase):
        raise ValueError("select amplitude and/or phase")
    if not isinstance(models, (list, tuple)):
        models = [models]
    per_model = []
    for m in models:
        parts = []
        if amplitude:
            parts.append(amplitude_perturbation_correlations(m, trials, cfg, sample_rate))
        if phase:
            parts.append(phase_perturbation_correlations(m, trials, cfg, sample_rate))
        per_model.append(parts[0] if len(parts) == 1 else parts[0].merge(parts[1]))
    if len(per_model) == 1:
        return per_model[0]
    return aggregate_tables(per_model)
