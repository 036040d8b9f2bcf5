"""Most-activating input windows and their summaries."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .network import ReceptiveField
from .signal import Dataset, save_dataset

SELECTION_MODES = ("trial_max", "units")


@dataclass
class WindowSet:
    """Input windows that most strongly drive one filter.

    ``windows`` is (k, channels, width) of per-channel standard scores, one
    row per selected trial, ordered by non-increasing ``activations``.
    ``degenerate[i, c]`` marks constant (unscalable) window channels.
    """

    layer: int
    filter: int
    trials: np.ndarray
    fields: list[ReceptiveField]
    windows: np.ndarray
    activations: np.ndarray
    degenerate: np.ndarray
    mode: str = "trial_max"

    def __len__(self) -> int:
        return len(self.trials)

    @property
    def width(self) -> int:
        return self.windows.shape[2]


@dataclass
class WindowSummary:
    median: np.ndarray  # (channels, width)
    q25: np.ndarray
    q75: np.ndarray
    channel: int  # representative channel


def standardize(x, axis: int = -1, tol: float = 1e-12):
    """Standard scores along ``axis`` using the population std.

    Returns ``(scores, degenerate)``; series whose std is below ``tol``
    (relative to 1 + |mean|) become all zeros and are flagged.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[axis] < 2:
        raise ValueError("standardization needs at least 2 samples")
    mu = x.mean(axis=axis, keepdims=True)
    sd = x.std(axis=axis, keepdims=True)
    deg = sd <= tol * (1.0 + np.abs(mu))
    z = np.where(deg, 0.0, (x - mu) / np.where(deg, 1.0, sd))
    return z, np.squeeze(deg, axis=axis)


def _quota(n: int, fraction: float) -> int:
    return min(n, max(1, math.ceil(fraction * n - 1e-9)))


def _as_trials(trials, window: int) -> np.ndarray:
    x = trials.data if isinstance(trials, Dataset) else trials
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] == 0:
        raise ValueError("trials must be a non-empty (n_trials, channels, time) array")
    if x.shape[2] < window:
        raise ValueError(f"trials have {x.shape[2]} samples, model window is {window}")
    return np.ascontiguousarray(x[:, :, :window])


def layer_activations(model, layer: int, trials, batch_size: int = 64) -> np.ndarray:
    """All unit activations of one layer, (n_trials, filters, units)."""
    if layer not in model.analysis_layers:
        raise ValueError(f"layer {layer} is not an analysis layer {tuple(model.analysis_layers)}")
    x = _as_trials(trials, model.window)
    return np.concatenate(
        [np.asarray(model.activations(x[s : s + batch_size], (layer,))[layer], np.float64)
         for s in range(0, x.shape[0], batch_size)]
    )


def most_activating_windows(
    model,
    layer: int,
    filter: int,
    trials,
    fraction: float = 0.1,
    mode: str = "trial_max",
    batch_size: int = 64,
    activations: np.ndarray | None = None,
) -> WindowSet:
    """Select the input windows behind a filter's largest unit activations.

    ``trial_max`` ranks trials by their maximum unit activation (earliest unit
    on ties) and keeps the top ceil(fraction * n_trials). ``units`` walks all
    (trial, unit) activations in descending order, keeping the first unit of
    each trial not yet used, until ceil(fraction * n_trials * n_units) units
    are taken or trials run out. Ties are broken by trial index, then unit.

    ``activations`` may pass precomputed :func:`layer_activations` output so
    that many filters of one layer share a single forward pass.
    """
    if mode not in SELECTION_MODES:
        raise ValueError(f"mode must be one of {SELECTION_MODES}")
    if layer not in model.analysis_layers:
        raise ValueError(f"layer {layer} is not an analysis layer {tuple(model.analysis_layers)}")
    n_filters = model.n_filters(layer)
    if not 0 <= filter < n_filters:
        raise ValueError(f"filter {filter} out of range [0, {n_filters})")
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    x = _as_trials(trials, model.window)
    N = x.shape[0]
    if activations is None:
        activations = layer_activations(model, layer, x, batch_size)
    if activations.shape[:2] != (N, n_filters):
        raise ValueError("precomputed activations do not match trials and layer")
    acts = activations[:, filter]  # (N, units)
    best_unit = np.argmax(acts, axis=1)
    best = acts[np.arange(N), best_unit]

    if mode == "trial_max":
        k = _quota(N, fraction)
        order = np.lexsort((np.arange(N), -best))[:k]
        units = best_unit[order]
    else:
        U = acts.shape[1]
        quota = min(N, math.ceil(fraction * N * U - 1e-9))
        flat = acts.ravel()
        t_idx, u_idx = np.divmod(np.arange(flat.size), U)
        walk = np.lexsort((u_idx, t_idx, -flat))
        seen = np.zeros(N, dtype=bool)
        sel_t, sel_u = [], []
        for j in walk:
            t = t_idx[j]
            if not seen[t]:
                seen[t] = True
                sel_t.append(t)
                sel_u.append(u_idx[j])
                if len(sel_t) == quota:
                    break
        order, units = np.array(sel_t, dtype=np.int64), np.array(sel_u, dtype=np.int64)

    fields = [model.receptive_field(layer, int(u)) for u in units]
    raw = np.stack([x[t, :, f.start : f.end] for t, f in zip(order, fields)])
    z, deg = standardize(raw)
    return WindowSet(layer, filter, order, fields, z, acts[order, units], np.atleast_2d(deg), mode)


def window_summary(ws: WindowSet, channel: int | None = None) -> WindowSummary:
    """Per-timepoint median and interquartile range across windows."""
    if len(ws) == 0:
        raise ValueError("empty window set")
    med = np.median(ws.windows, axis=0)
    q25, q75 = np.percentile(ws.windows, [25, 75], axis=0)
    if channel is None:
        channel = int(np.argmax(np.abs(med).max(axis=1)))
    elif not 0 <= channel < med.shape[0]:
        raise ValueError(f"channel {channel} out of range")
    return WindowSummary(med, q25, q75, channel)


# --------------------------------------------------------------------------
# export

WINDOW_COLUMNS = ("layer", "filter", "trial", "rf_start", "rf_end", "activation")


def write_windows_csv(path, sets) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(WINDOW_COLUMNS)
        for ws in sets:
            for t, f, a in zip(ws.trials, ws.fields, ws.activations):
                w.writerow([ws.layer, ws.filter, int(t), f.start, f.end, repr(float(a))])


def save_window_block(path, sets, sample_rate: float) -> None:
    """Store one layer's windows in the dataset file layout.

    Each stored "trial" is one window; its label is the filter index and the
    metadata lists, per window, the source trial and receptive field.
    """
    sets = list(sets)
    if not sets:
        raise ValueError("no window sets to store")
    layers = {ws.layer for ws in sets}
    if len(layers) != 1:
        raise ValueError("a block holds windows of exactly one layer")
    data = np.concatenate([ws.windows for ws in sets]).astype(np.float32)
    labels = np.concatenate([np.full(len(ws), ws.filter) for ws in sets])
    n_filters = int(labels.max()) + 1
    meta = {
        "kind": "most_activating_windows",
        "layer": sets[0].layer,
        "mode": sets[0].mode,
        "windows": [
            {"filter": ws.filter, "trial": int(t), "rf_start": f.start, "rf_end": f.end}
            for ws in sets
            for t, f in zip(ws.trials, ws.fields)
        ],
    }
    save_dataset(path, Dataset(data, labels, sample_rate, n_filters, meta))
