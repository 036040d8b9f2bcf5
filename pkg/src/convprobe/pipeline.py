"""Stage orchestration: synth -> train -> probe / windows -> fit -> report.

Every stage reads its inputs from and writes its outputs to one output
directory. Each output file ``name`` gets a sidecar ``name.provenance.json``
holding the config hash, seed, package versions, a timestamp and the full
run configuration; all other output bytes depend only on config and seed.
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
import re
import platform
import time
from contextlib import nullcontext
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy
from threadpoolctl import threadpool_limits

from . import __version__, kernels
from .checkpoint import load_checkpoint, save_checkpoint
from .fitting import FitRecord, compare_fit_errors, fit_linear, fit_sinusoid, write_fits_csv
from .network import NetworkSpec, SpecError, build_network, default_spec
from .perturbation import (
    CorrelationTable,
    PerturbationRunConfig,
    perturbation_correlations,
    read_table_csv,
    write_table_csv,
)
from .signal import ConfigError, SynthConfig, common_average_reference, generate_synthetic_dataset, load_dataset, save_dataset
from .stats import histogram
from .svg import DEFAULT_BANDS as CHART_BANDS
from .svg import ChartSpec, Series, render_chart
from .training import TrainConfig, split_indices, train
from .windows import SELECTION_MODES, layer_activations, most_activating_windows, save_window_block, window_summary, write_windows_csv

log = logging.getLogger(__name__)

STAGES = ("synth", "train", "probe", "windows", "fit", "report")
OUTDIR_ENV = "CONVPROBE_OUTDIR"
DEFAULT_OUTDIR = "convprobe-out"

DATASET_FILE = "dataset.cvpr"
CHECKPOINT_FILE = "model.ckpt"
HISTORY_FILE = "training_history.csv"
TABLE_FILE = "correlations.csv"
WINDOWS_FILE = "windows.csv"
FITS_FILE = "fits.csv"
FIT_SUMMARY_FILE = "fit_summary.json"
CHARTS = (
    "perturbation_by_frequency.svg",
    "perturbation_by_layer.svg",
    "fitted_frequency_histogram.svg",
    "fit_mse.svg",
    "window_overlay.svg",
)


class ConfigValidationError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class StageDependencyError(RuntimeError):
    """A stage's upstream artifact is missing."""

    def __init__(self, stage: str, missing: str, required: str):
        super().__init__(f"{stage}: missing {missing}; {required} required")
        self.stage = stage
        self.required = required


# --------------------------------------------------------------------------
# configuration


@dataclass
class NetworkConfig:
    window: int = 522
    kernel: int = 10
    filters: tuple[int, ...] = (25, 25, 50, 100, 200)
    pool: tuple[int, int] = (3, 3)


@dataclass
class ProbeConfig:
    amplitude: bool = True
    phase: bool = True
    trials: str = "all"  # all | train | valid
    perturbation: PerturbationRunConfig = field(default_factory=PerturbationRunConfig)


@dataclass
class WindowsConfig:
    fraction: float = 0.1
    mode: str = "trial_max"
    layers: tuple[int, ...] | None = None
    max_filters: int | None = None  # first N filters per layer; None = all


@dataclass
class FitConfig:
    refine: bool = True
    channel: str = "representative"  # representative | best


@dataclass
class ReportConfig:
    overlay_layer: int = 1
    overlay_filter: int = 0
    histogram_bin_hz: float = 5.0


@dataclass
class RunConfig:
    seed: int = 0
    threads: int | None = None
    out_dir: str | None = None
    common_average: bool = True
    synth: SynthConfig = field(default_factory=lambda: SynthConfig(n_trials=300))
    network: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    windows: WindowsConfig = field(default_factory=WindowsConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    report: ReportConfig = field(default_factory=ReportConfig)

    def output_dir(self) -> Path:
        return Path(self.out_dir or os.environ.get(OUTDIR_ENV) or DEFAULT_OUTDIR)

    def network_spec(self) -> NetworkSpec:
        n = self.network
        return default_spec(
            channels=self.synth.channels, window=n.window, n_classes=self.synth.n_classes,
            kernel=n.kernel, filters=tuple(n.filters), pool=tuple(n.pool),
        )

    def to_dict(self) -> dict:
        probe = {
            "amplitude": self.probe.amplitude,
            "phase": self.probe.phase,
            "trials": self.probe.trials,
            "perturbation": self.probe.perturbation.to_dict(),
        }
        return {
            "seed": self.seed,
            "threads": self.threads,
            "out_dir": self.out_dir,
            "common_average": self.common_average,
            "synth": self.synth.to_dict(),
            "network": {"window": self.network.window, "kernel": self.network.kernel,
                        "filters": list(self.network.filters), "pool": list(self.network.pool)},
            "train": self.train.to_dict(),
            "probe": probe,
            "windows": {"fraction": self.windows.fraction, "mode": self.windows.mode,
                        "layers": None if self.windows.layers is None else list(self.windows.layers),
                        "max_filters": self.windows.max_filters},
            "fit": {"refine": self.fit.refine, "channel": self.fit.channel},
            "report": {"overlay_layer": self.report.overlay_layer, "overlay_filter": self.report.overlay_filter,
                       "histogram_bin_hz": self.report.histogram_bin_hz},
        }

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("out_dir")
        d.pop("threads")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        cfg = apply_overrides(cls(), d)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigValidationError("seed", "must be a non-negative integer")
        if self.threads is not None and self.threads < 1:
            raise ConfigValidationError("threads", "must be >= 1")
        _wrap("synth", self.synth.validate)
        _wrap("train", self.train.validate)
        p = self.probe.perturbation
        checks = [
            ("probe.perturbation.repetitions", p.repetitions >= 1, "must be >= 1"),
            ("probe.perturbation.amplitude_sigma", p.amplitude_sigma > 0, "must be > 0"),
            ("probe.perturbation.phase_sigma", p.phase_sigma > 0, "must be > 0"),
            ("probe.perturbation.phase_statistic", p.phase_statistic in ("abs", "signed"), "must be 'abs' or 'signed'"),
            ("probe.perturbation.mode", p.mode in ("simultaneous", "per_band"), "must be 'simultaneous' or 'per_band'"),
            ("probe.perturbation.batch_size", p.batch_size >= 1, "must be >= 1"),
            ("probe.perturbation.crop_stride", p.crop_stride >= 1, "must be >= 1"),
            ("probe.trials", self.probe.trials in ("all", "train", "valid"), "must be 'all', 'train' or 'valid'"),
            ("probe", self.probe.amplitude or self.probe.phase, "enable amplitude and/or phase"),
            ("windows.fraction", 0 < self.windows.fraction <= 1, "must lie in (0, 1]"),
            ("windows.mode", self.windows.mode in SELECTION_MODES, f"must be one of {SELECTION_MODES}"),
            ("windows.max_filters", self.windows.max_filters is None or self.windows.max_filters >= 1, "must be >= 1"),
            ("fit.channel", self.fit.channel in ("representative", "best"), "must be 'representative' or 'best'"),
            ("report.histogram_bin_hz", self.report.histogram_bin_hz > 0, "must be > 0"),
        ]
        for path, ok, msg in checks:
            if not ok:
                raise ConfigValidationError(path, msg)
        try:
            spec = self.network_spec()
        except (SpecError, ValueError) as exc:
            raise ConfigValidationError("network", str(exc)) from exc
        if self.synth.n_times < spec.window:
            raise ConfigValidationError("synth.duration", f"gives {self.synth.n_times} samples, network window is {spec.window}")
        for path, layers in (("probe.perturbation.layers", p.layers), ("windows.layers", self.windows.layers)):
            if layers is not None and not set(layers) <= set(spec.analysis_layers):
                raise ConfigValidationError(path, f"layers must be among {spec.analysis_layers}")
        if self.report.overlay_layer not in spec.analysis_layers:
            raise ConfigValidationError("report.overlay_layer", f"must be among {spec.analysis_layers}")


def _wrap(prefix: str, fn) -> None:
    try:
        fn()
    except (ConfigError, ValueError) as exc:
        msg = str(exc)
        m = re.match(r"([A-Za-z_]\w*(?:\[\d+\])*)", msg)
        path = f"{prefix}.{m.group(1)}" if m else prefix
        raise ConfigValidationError(path, msg) from exc


_TUPLE_FIELDS = {("network", "filters"), ("network", "pool"), ("windows", "layers"), ("probe.perturbation", "layers")}


def apply_overrides(cfg: RunConfig, d: dict, prefix: str = "") -> RunConfig:
    """Return a copy of ``cfg`` with values from nested dict ``d`` applied.

    Unknown keys raise :class:`ConfigValidationError` with their field path.
    """
    cfg = copy.deepcopy(cfg)
    if not isinstance(d, dict):
        raise ConfigValidationError(prefix or "<root>", "expected an object")
    _apply(cfg, d, prefix)
    return cfg


def _apply(obj, d: dict, prefix: str) -> None:
    for key, value in d.items():
        path = f"{prefix}.{key}" if prefix else key
        if isinstance(obj, SynthConfig) and key == "class_rules":
            try:
                obj.class_rules = SynthConfig.from_dict({"class_rules": value}).class_rules
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigValidationError(path, f"invalid class rules: {exc}") from exc
            continue
        if not hasattr(obj, "__dataclass_fields__") or key not in obj.__dataclass_fields__:
            raise ConfigValidationError(path, "unknown field")
        current = getattr(obj, key)
        if hasattr(current, "__dataclass_fields__"):
            if not isinstance(value, dict):
                raise ConfigValidationError(path, "expected an object")
            _apply(current, value, path)
            continue
        if key == "bands" and isinstance(value, dict):
            try:
                value = {k: (float(v[0]), float(v[1])) for k, v in value.items()}
            except (TypeError, ValueError, IndexError) as exc:
                raise ConfigValidationError(path, "bands must map names to [low, high]") from exc
        elif (prefix, key) in _TUPLE_FIELDS and value is not None:
            try:
                value = tuple(int(v) for v in value)
            except (TypeError, ValueError) as exc:
                raise ConfigValidationError(path, "expected a list of integers") from exc
        elif isinstance(current, bool) and not isinstance(value, bool):
            raise ConfigValidationError(path, "expected true or false")
        elif isinstance(current, (int, float)) and not isinstance(current, bool):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigValidationError(path, "expected a number")
            if isinstance(current, int) and isinstance(value, float):
                if not value.is_integer():
                    raise ConfigValidationError(path, "expected an integer")
                value = int(value)
        setattr(obj, key, value)


def load_config(path) -> RunConfig:
    try:
        d = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigValidationError("<file>", f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigValidationError("<file>", f"invalid JSON: {exc}") from exc
    return RunConfig.from_dict(d)


# --------------------------------------------------------------------------
# provenance and deterministic text output


def versions() -> dict:
    return {
        "convprobe": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
        "kernel_backend": kernels.BACKEND,
    }


def write_provenance(path: Path, cfg: RunConfig, stage: str, extra: dict | None = None) -> Path:
    side = path.with_name(path.name + ".provenance.json")
    doc = {
        "file": path.name,
        "stage": stage,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "versions": versions(),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "config": cfg.to_dict(),
    }
    if extra:
        doc.update(extra)
    side.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return side


def _dump_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# stages


@dataclass
class StageContext:
    cfg: RunConfig
    out: Path

    def path(self, name: str) -> Path:
        return self.out / name

    def require(self, stage: str, name: str, upstream: str) -> Path:
        p = self.path(name)
        if not p.exists():
            raise StageDependencyError(stage, str(p), upstream)
        return p

    def emit(self, path: Path, stage: str, extra: dict | None = None) -> None:
        write_provenance(path, self.cfg, stage, extra)
        log.info("%s: wrote %s", stage, path)


def stage_synth(ctx: StageContext) -> None:
    cfg = ctx.cfg
    ds = generate_synthetic_dataset(cfg.synth, cfg.seed)
    if cfg.common_average:
        ds = ds.with_data(common_average_reference(ds.data).astype(np.float32))
        ds.metadata["common_average_reference"] = True
    p = ctx.path(DATASET_FILE)
    save_dataset(p, ds)
    ctx.emit(p, "synth")


def _load_data(ctx: StageContext, stage: str):
    return load_dataset(ctx.require(stage, DATASET_FILE, "synth"))


def stage_train(ctx: StageContext) -> None:
    cfg = ctx.cfg
    ds = _load_data(ctx, "train")
    net = build_network(cfg.network_spec(), cfg.seed)
    result = train(net, ds, cfg.train, cfg.seed)
    p = ctx.path(CHECKPOINT_FILE)
    save_checkpoint(p, result.network)
    final = result.history[-1] if result.history else None
    ctx.emit(p, "train", {"valid_accuracy": None if final is None else final.valid_accuracy})
    h = ctx.path(HISTORY_FILE)
    lines = ["epoch,train_loss,train_accuracy,valid_loss,valid_accuracy"]
    for m in result.history:
        lines.append(",".join([str(m.epoch)] + [repr(float(v)) for v in
                               (m.train_loss, m.train_accuracy, m.valid_loss, m.valid_accuracy)]))
    h.write_bytes(("\r\n".join(lines) + "\r\n").encode())
    ctx.emit(h, "train")


def _load_model(ctx: StageContext, stage: str):
    p = ctx.require(stage, CHECKPOINT_FILE, "train")
    return load_checkpoint(p, ctx.cfg.network_spec()).astype(np.float64)


def _trial_subset(ctx: StageContext, ds, which: str):
    if which == "all":
        return ds
    tr, va = split_indices(ds.labels, ctx.cfg.train.valid_fraction, ctx.cfg.seed)
    return ds.subset(tr if which == "train" else va)


def stage_probe(ctx: StageContext) -> CorrelationTable:
    cfg = ctx.cfg
    ds = _load_data(ctx, "probe")
    net = _load_model(ctx, "probe")
    pcfg = copy.deepcopy(cfg.probe.perturbation)
    table = perturbation_correlations(
        net, _trial_subset(ctx, ds, cfg.probe.trials), pcfg,
        amplitude=cfg.probe.amplitude, phase=cfg.probe.phase,
    )
    p = ctx.path(TABLE_FILE)
    write_table_csv(p, table)
    summary = {"perturbation_config": pcfg.to_dict(),
               "phase_statistic_note": "outer phase correlation uses |wrapped shift|" if pcfg.phase_statistic == "abs"
               else "outer phase correlation uses the signed wrapped shift"}
    for kind in ("amp", "phase"):
        if getattr(table, f"rho_{kind}") is not None:
            summary[f"layer_mean_{kind}"] = [float(v) for v in table.layer_mean(kind)]
            summary[f"layer_mean_{kind}_permutation_floor"] = [float(v) for v in getattr(table, f"null_{kind}").mean(axis=1)]
    side = ctx.path(TABLE_FILE + ".json")
    _dump_json(side, summary)
    ctx.emit(p, "probe")
    ctx.emit(side, "probe")
    return table


def _selected_filters(ctx: StageContext, net, layer: int) -> range:
    n = net.n_filters(layer)
    m = ctx.cfg.windows.max_filters
    return range(n if m is None else min(n, m))


def _layer_windows(ctx: StageContext, net, ds, layer: int) -> list:
    wc = ctx.cfg.windows
    acts = layer_activations(net, layer, ds)
    return [most_activating_windows(net, layer, f, ds, wc.fraction, wc.mode, activations=acts)
            for f in _selected_filters(ctx, net, layer)]


def _window_layers(ctx: StageContext, net) -> tuple[int, ...]:
    return tuple(net.analysis_layers if ctx.cfg.windows.layers is None else ctx.cfg.windows.layers)


def stage_windows(ctx: StageContext) -> dict:
    ds = _load_data(ctx, "windows")
    net = _load_model(ctx, "windows")
    ds = _trial_subset(ctx, ds, "train")
    sets = {}
    for layer in _window_layers(ctx, net):
        sets[layer] = _layer_windows(ctx, net, ds, layer)
        p = ctx.path(f"windows_layer{layer}.cvpr")
        save_window_block(p, sets[layer], ds.sample_rate)
        ctx.emit(p, "windows")
    p = ctx.path(WINDOWS_FILE)
    write_windows_csv(p, [ws for layer in sets for ws in sets[layer]])
    ctx.emit(p, "windows", {"selection_mode": ctx.cfg.windows.mode})
    return sets


def _load_window_sets(ctx: StageContext, stage: str):
    """Rebuild window sets from the stored per-layer blocks."""
    from .network import ReceptiveField
    from .windows import WindowSet

    ctx.require(stage, WINDOWS_FILE, "windows")
    net = _load_model(ctx, stage)
    out = {}
    for layer in _window_layers(ctx, net):
        block = load_dataset(ctx.require(stage, f"windows_layer{layer}.cvpr", "windows"))
        meta = block.metadata["windows"]
        per_filter: dict[int, list[int]] = {}
        for i, m in enumerate(meta):
            per_filter.setdefault(int(m["filter"]), []).append(i)
        sets = []
        for f, rows in sorted(per_filter.items()):
            w = block.data[rows].astype(np.float64)
            sets.append(WindowSet(
                layer, f, np.array([meta[i]["trial"] for i in rows]),
                [ReceptiveField(meta[i]["rf_start"], meta[i]["rf_end"]) for i in rows],
                w, np.full(len(rows), np.nan), np.zeros(w.shape[:2], bool), block.metadata["mode"],
            ))
        out[layer] = sets
    return out


def _fit_set(ws, fs: float, refine: bool, channel_mode: str):
    summ = window_summary(ws)
    channels = [summ.channel] if channel_mode == "representative" else range(summ.median.shape[0])
    best = None
    for c in channels:
        s = fit_sinusoid(summ.median[c], fs, refine)
        if best is None or s.mse < best[1].mse:
            best = (c, s, fit_linear(summ.median[c]))
    c, sine, lin = best
    # individual windows on the same channel
    ind = [(fit_sinusoid(w[c], fs, refine).mse, fit_linear(w[c]).mse) for w in ws.windows]
    return FitRecord(ws.layer, ws.filter, sine, lin), ind


def stage_fit(ctx: StageContext) -> dict:
    cfg = ctx.cfg
    ds = load_dataset(ctx.require("fit", DATASET_FILE, "synth"))
    sets = _load_window_sets(ctx, "fit")
    records, summary = [], {"channel_mode": cfg.fit.channel, "layers": {}}
    for layer, layer_sets in sets.items():
        recs, ind = [], []
        for ws in layer_sets:
            r, i = _fit_set(ws, ds.sample_rate, cfg.fit.refine, cfg.fit.channel)
            recs.append(r)
            ind.extend(i)
        records.extend(recs)
        entry = {"n_filters": len(recs), "n_windows": len(ind)}
        for name, pairs in (("median", [(r.sine.mse, r.linear.mse) for r in recs]), ("individual", ind)):
            if len(pairs) >= 5:
                comp = compare_fit_errors([p[0] for p in pairs], [p[1] for p in pairs])
                entry[name] = {"mean_mse_sine": comp.mean_sine, "mean_mse_linear": comp.mean_linear,
                               "wilcoxon_statistic": comp.statistic, "pvalue": comp.pvalue,
                               "exact": comp.test.exact, "n_nonzero": comp.test.n}
            else:
                s = [p[0] for p in pairs]
                l_ = [p[1] for p in pairs]
                entry[name] = {"mean_mse_sine": float(np.mean(s)), "mean_mse_linear": float(np.mean(l_)),
                               "pvalue": None, "note": "fewer than 5 pairs; no test"}
        summary["layers"][str(layer)] = entry
    p = ctx.path(FITS_FILE)
    write_fits_csv(p, records)
    ctx.emit(p, "fit")
    s = ctx.path(FIT_SUMMARY_FILE)
    _dump_json(s, summary)
    ctx.emit(s, "fit")
    return summary


def _read_fits(path: Path) -> list[dict]:
    import csv

    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def stage_report(ctx: StageContext) -> list[Path]:
    cfg = ctx.cfg
    table = read_table_csv(ctx.require("report", TABLE_FILE, "probe"))
    fits = _read_fits(ctx.require("report", FITS_FILE, "fit"))
    summary = json.loads(ctx.require("report", FIT_SUMMARY_FILE, "fit").read_text())
    sets = _load_window_sets(ctx, "report")
    charts = []

    # correlations per frequency, one line per layer and correlation type
    series = []
    for li, l in enumerate(table.layers):
        if table.rho_phase is not None:
            series.append(Series(f"phase, layer {l}", list(table.frequencies), list(table.rho_phase[li]), "left"))
        if table.rho_amp is not None:
            series.append(Series(f"amplitude, layer {l}", list(table.frequencies), list(table.rho_amp[li]), "right"))
    kind = "dual" if table.rho_phase is not None and table.rho_amp is not None else "line"
    charts.append(ChartSpec(kind, series, "Mean absolute perturbation correlation by frequency",
                            "frequency (Hz)", "phase correlation", "amplitude correlation", bands=list(CHART_BANDS)))

    layers = [float(l) for l in table.layers]
    series = []
    if table.rho_phase is not None:
        series.append(Series("phase", layers, list(table.layer_mean("phase")), "left"))
    if table.rho_amp is not None:
        series.append(Series("amplitude", layers, list(table.layer_mean("amp")), "right"))
    charts.append(ChartSpec(kind, series, "Frequency-averaged perturbation correlation by layer",
                            "layer", "phase correlation", "amplitude correlation"))

    step = cfg.report.histogram_bin_hz
    top = table.frequencies.max() if table.frequencies.size else 1.0
    edges = np.arange(0.0, top + step, step)
    series = []
    for l in sorted({int(r["layer"]) for r in fits}):
        freqs = [float(r["freq_hz"]) for r in fits if int(r["layer"]) == l]
        h = histogram(freqs, edges)
        series.append(Series(f"layer {l}", [], list(h.relative), edges=list(edges)))
    charts.append(ChartSpec("histogram", series, "Frequencies of sinusoids fitted to window medians",
                            "frequency (Hz)", "relative frequency", bands=list(CHART_BANDS)))

    fl = [float(l) for l in sorted(summary["layers"], key=int)]
    ent = [summary["layers"][k] for k in sorted(summary["layers"], key=int)]
    series = [
        Series("sine fit, median", fl, [e["median"]["mean_mse_sine"] for e in ent]),
        Series("linear fit, median", fl, [e["median"]["mean_mse_linear"] for e in ent]),
        Series("sine fit, individual", fl, [e["individual"]["mean_mse_sine"] for e in ent]),
        Series("linear fit, individual", fl, [e["individual"]["mean_mse_linear"] for e in ent]),
    ]
    charts.append(ChartSpec("line", series, "Mean squared error of window fits", "layer", "MSE"))

    layer = cfg.report.overlay_layer
    layer_sets = sets.get(layer) or next(iter(sets.values()))
    ws = next((w for w in layer_sets if w.filter == cfg.report.overlay_filter), layer_sets[0])
    summ = window_summary(ws)
    c = summ.channel
    t = list(range(ws.width))
    xs = [float(i) for _ in range(len(ws)) for i in t]
    ys = [float(v) for w in ws.windows for v in w[c]]
    charts.append(ChartSpec("window", [
        Series("interquartile range", t, list(summ.q25[c]), role="iqr", y_high=list(summ.q75[c])),
        Series("windows", xs, ys, role="scatter"),
        Series("median", t, list(summ.median[c]), role="median"),
    ], f"Most-activating windows, layer {ws.layer} filter {ws.filter}, channel {c}",
        "sample in window", "standard score"))

    paths = []
    for name, spec in zip(CHARTS, charts):
        p = ctx.path(name)
        p.write_text(render_chart(spec))
        ctx.emit(p, "report")
        paths.append(p)
    return paths


STAGE_FUNCS = {
    "synth": stage_synth,
    "train": stage_train,
    "probe": stage_probe,
    "windows": stage_windows,
    "fit": stage_fit,
    "report": stage_report,
}


def run_pipeline(cfg: RunConfig, stages=STAGES) -> int:
    """Run ``stages`` in dependency order; 0 on success.

    Configuration and dependency errors propagate to the caller.
    """
    cfg.validate()
    stages = [s for s in STAGES if s in set(stages)]
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    ctx = StageContext(cfg, out)
    limits = threadpool_limits(cfg.threads) if cfg.threads else nullcontext()
    with limits:
        for s in stages:
            t0 = time.perf_counter()
            STAGE_FUNCS[s](ctx)
            log.info("stage %s finished in %.1f s", s, time.perf_counter() - t0)
    return 0


def desk_config(**overrides) -> RunConfig:
    """Small configuration for quick end-to-end runs."""
    cfg = RunConfig()
    cfg.synth.n_trials = 60
    cfg.train.epochs = 2
    cfg.probe.perturbation.repetitions = 1
    cfg.windows.max_filters = 8
    return apply_overrides(cfg, overrides) if overrides else cfg

