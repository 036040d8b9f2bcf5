"""Static SVG 1.1 charts built from plain strings.

Four kinds: ``line`` (one polyline per series), ``dual`` (left and right
y-axes with independent scales), ``histogram`` (one rect per bin, nothing
else is drawn as a rect) and ``window`` (scatter of all window samples,
median polyline, interquartile band). Frequency bands are shaded with
polygons. Numbers are written with fixed precision so output is
deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape, quoteattr

import numpy as np

CHART_KINDS = ("line", "dual", "histogram", "window")
DEFAULT_BANDS = [(7.0, 13.0, "alpha"), (13.0, 30.0, "beta"), (50.0, 100.0, "high gamma")]
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"]
BAND_FILLS = ["#fdd9a0", "#c9e7c3", "#c8d8f0"]


@dataclass
class Series:
    """One data series.

    ``axis`` picks the y-axis of a dual chart. Histogram series give bin
    ``edges`` (len(y) + 1) and counts in ``y``. Window charts use ``role``:
    "scatter" (x, y points), "median" (polyline) or "iqr" (``y`` is the
    lower and ``y_high`` the upper quartile).
    """

    label: str
    x: list[float]
    y: list[float]
    axis: str = "left"
    edges: list[float] | None = None
    role: str = "line"
    y_high: list[float] | None = None


@dataclass
class ChartSpec:
    kind: str
    series: list[Series]
    title: str = ""
    x_label: str = ""
    y_label: str = ""
    y2_label: str = ""
    x_range: tuple[float, float] | None = None
    y_range: tuple[float, float] | None = None
    y2_range: tuple[float, float] | None = None
    bands: list[tuple[float, float, str]] = field(default_factory=list)
    width: int = 720
    height: int = 420

    def validate(self) -> None:
        if self.kind not in CHART_KINDS:
            raise ValueError(f"chart kind must be one of {CHART_KINDS}")
        if not self.series:
            raise ValueError("chart has no series")
        for s in self.series:
            if len(s.y) == 0:
                raise ValueError(f"series {s.label!r} is empty")
            if self.kind == "histogram":
                if s.edges is None or len(s.edges) != len(s.y) + 1:
                    raise ValueError(f"series {s.label!r}: histogram needs len(y) + 1 edges")
                _finite(s.edges, s.label)
            elif len(s.x) != len(s.y):
                raise ValueError(f"series {s.label!r}: x and y lengths differ")
            if s.y_high is not None and len(s.y_high) != len(s.y):
                raise ValueError(f"series {s.label!r}: y_high length differs from y")
            if s.axis not in ("left", "right"):
                raise ValueError(f"series {s.label!r}: axis must be 'left' or 'right'")
            _finite(s.x, s.label)
            _finite(s.y, s.label)
            if s.y_high is not None:
                _finite(s.y_high, s.label)
        if self.kind == "dual" and not {s.axis for s in self.series} >= {"left", "right"}:
            raise ValueError("dual-axis chart needs series on both axes")


def _finite(v, label) -> None:
    if not np.all(np.isfinite(np.asarray(v, dtype=float))):
        raise ValueError(f"series {label!r} has non-finite values")


def _f(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _tick_label(v: float) -> str:
    return f"{v:.4g}"


def _extent(values, given, pad_zero=False) -> tuple[float, float]:
    if given is not None:
        lo, hi = float(given[0]), float(given[1])
    else:
        v = np.concatenate([np.asarray(x, dtype=float).ravel() for x in values])
        lo, hi = float(v.min()), float(v.max())
        if pad_zero:
            lo = min(lo, 0.0)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


class _Frame:
    def __init__(self, spec: ChartSpec, x_range, y_range):
        self.left, self.right, self.top, self.bottom = 70, 70, 40, 55
        self.w = spec.width - self.left - self.right
        self.h = spec.height - self.top - self.bottom
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range

    def px(self, x: float) -> float:
        return self.left + (x - self.x0) / (self.x1 - self.x0) * self.w

    def py(self, y: float, rng=None) -> float:
        y0, y1 = rng or (self.y0, self.y1)
        return self.top + self.h - (y - y0) / (y1 - y0) * self.h


def _points(frame: _Frame, xs, ys, rng=None) -> str:
    return " ".join(f"{_f(frame.px(x))},{_f(frame.py(y, rng))}" for x, y in zip(xs, ys))


def _x_axis(frame: _Frame, label: str) -> list[str]:
    base = frame.top + frame.h
    out = ['<g class="x-axis">',
           f'<line x1="{_f(frame.left)}" y1="{_f(base)}" x2="{_f(frame.left + frame.w)}" y2="{_f(base)}" stroke="#000"/>']
    for t in _nice_ticks(frame.x0, frame.x1):
        x = frame.px(t)
        out.append(f'<line x1="{_f(x)}" y1="{_f(base)}" x2="{_f(x)}" y2="{_f(base + 5)}" stroke="#000"/>')
        out.append(f'<text x="{_f(x)}" y="{_f(base + 18)}" text-anchor="middle" font-size="11">{_tick_label(t)}</text>')
    out.append(f'<text x="{_f(frame.left + frame.w / 2)}" y="{_f(base + 40)}" text-anchor="middle" font-size="12">{escape(label)}</text>')
    out.append("</g>")
    return out


def _y_axis(frame: _Frame, label: str, side: str, rng) -> list[str]:
    x = frame.left if side == "left" else frame.left + frame.w
    sign = -1 if side == "left" else 1
    anchor = "end" if side == "left" else "start"
    out = [f'<g class="y-axis {side}">',
           f'<line x1="{_f(x)}" y1="{_f(frame.top)}" x2="{_f(x)}" y2="{_f(frame.top + frame.h)}" stroke="#000"/>']
    for t in _nice_ticks(*rng):
        y = frame.py(t, rng)
        out.append(f'<line x1="{_f(x)}" y1="{_f(y)}" x2="{_f(x + 5 * sign)}" y2="{_f(y)}" stroke="#000"/>')
        out.append(f'<text x="{_f(x + 8 * sign)}" y="{_f(y + 4)}" text-anchor="{anchor}" font-size="11">{_tick_label(t)}</text>')
    lx = x + 55 * sign
    ly = frame.top + frame.h / 2
    rot = -90 if side == "left" else 90
    out.append(f'<text x="{_f(lx)}" y="{_f(ly)}" text-anchor="middle" font-size="12" '
               f'transform="rotate({rot} {_f(lx)} {_f(ly)})">{escape(label)}</text>')
    out.append("</g>")
    return out


def _bands(frame: _Frame, bands) -> list[str]:
    out = ['<g class="bands">']
    for i, (lo, hi, name) in enumerate(bands):
        a, b = max(lo, frame.x0), min(hi, frame.x1)
        if b <= a:
            continue
        xa, xb = frame.px(a), frame.px(b)
        yt, yb = frame.top, frame.top + frame.h
        fill = BAND_FILLS[i % len(BAND_FILLS)]
        out.append(f'<polygon points="{_f(xa)},{_f(yt)} {_f(xb)},{_f(yt)} {_f(xb)},{_f(yb)} {_f(xa)},{_f(yb)}" '
                   f'fill="{fill}" fill-opacity="0.5" stroke="none"><title>{escape(name)}</title></polygon>')
        out.append(f'<text x="{_f((xa + xb) / 2)}" y="{_f(yt + 12)}" text-anchor="middle" font-size="10">{escape(name)}</text>')
    out.append("</g>")
    return out


def _legend(spec: ChartSpec, entries) -> list[str]:
    out = ['<g class="legend">']
    x = spec.width - 70 - 150
    for i, (label, color) in enumerate(entries):
        y = 40 + 8 + 16 * i
        out.append(f'<line x1="{x}" y1="{y}" x2="{x + 18}" y2="{y}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{x + 24}" y="{y + 4}" font-size="11">{escape(label)}</text>')
    out.append("</g>")
    return out


def render_chart(spec: ChartSpec) -> str:
    """Render ``spec`` to an SVG document string."""
    spec.validate()
    body: list[str] = []
    if spec.kind == "histogram":
        body = _render_histogram(spec)
    elif spec.kind == "window":
        body = _render_window(spec)
    else:
        body = _render_lines(spec)
    head = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{spec.width}" height="{spec.height}" '
        f'viewBox="0 0 {spec.width} {spec.height}">',
        f'<title>{escape(spec.title)}</title>',
        f'<text x="{spec.width / 2:.2f}" y="22" text-anchor="middle" font-size="14">{escape(spec.title)}</text>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def _render_lines(spec: ChartSpec) -> list[str]:
    left = [s for s in spec.series if s.axis == "left" or spec.kind == "line"]
    right = [s for s in spec.series if s.axis == "right" and spec.kind == "dual"]
    xr = _extent([s.x for s in spec.series], spec.x_range)
    yr = _extent([s.y for s in left], spec.y_range)
    frame = _Frame(spec, xr, yr)
    out = _bands(frame, spec.bands)
    out += _x_axis(frame, spec.x_label)
    out += _y_axis(frame, spec.y_label, "left", yr)
    y2r = None
    if right:
        y2r = _extent([s.y for s in right], spec.y2_range)
        out += _y_axis(frame, spec.y2_label, "right", y2r)
    entries = []
    out.append('<g class="series">')
    for i, s in enumerate(spec.series):
        color = PALETTE[i % len(PALETTE)]
        rng = y2r if s in right else yr
        dash = ' stroke-dasharray="6,3"' if s in right else ""
        out.append(f'<polyline class="series-line" data-axis="{s.axis}" points="{_points(frame, s.x, s.y, rng)}" '
                   f'fill="none" stroke="{color}" stroke-width="2"{dash}><title>{escape(s.label)}</title></polyline>')
        entries.append((s.label, color))
    out.append("</g>")
    return out + _legend(spec, entries)


def _render_histogram(spec: ChartSpec) -> list[str]:
    xr = _extent([s.edges for s in spec.series], spec.x_range)
    yr = _extent([s.y for s in spec.series], spec.y_range, pad_zero=True)
    frame = _Frame(spec, xr, (0.0, yr[1]) if spec.y_range is None else yr)
    out = _bands(frame, spec.bands)
    out += _x_axis(frame, spec.x_label)
    out += _y_axis(frame, spec.y_label, "left", (frame.y0, frame.y1))
    out.append('<g class="bars">')
    n = len(spec.series)
    entries = []
    for i, s in enumerate(spec.series):
        color = PALETTE[i % len(PALETTE)]
        for lo, hi, c in zip(s.edges[:-1], s.edges[1:], s.y):
            xa, xb = frame.px(lo), frame.px(hi)
            bw = (xb - xa) / n
            ya = frame.py(c)
            base = frame.py(0.0)
            out.append(f'<rect x="{_f(xa + i * bw)}" y="{_f(min(ya, base))}" width="{_f(max(bw - 1, 0.5))}" '
                       f'height="{_f(abs(base - ya))}" fill="{color}" data-value={quoteattr(repr(float(c)))}/>')
        entries.append((s.label, color))
    out.append("</g>")
    return out + _legend(spec, entries)


def _render_window(spec: ChartSpec) -> list[str]:
    vals = [s.y for s in spec.series] + [s.y_high for s in spec.series if s.y_high is not None]
    xr = _extent([s.x for s in spec.series], spec.x_range)
    yr = _extent(vals, spec.y_range)
    frame = _Frame(spec, xr, yr)
    out = _x_axis(frame, spec.x_label) + _y_axis(frame, spec.y_label, "left", yr)
    order = {"iqr": 0, "scatter": 1, "median": 2}
    for s in sorted(spec.series, key=lambda s: order.get(s.role, 3)):
        if s.role == "iqr":
            hi = s.y_high if s.y_high is not None else s.y
            pts = _points(frame, s.x, hi) + " " + _points(frame, s.x[::-1], s.y[::-1])
            out.append(f'<polygon class="iqr" points="{pts}" fill="#bbbbbb" fill-opacity="0.6" stroke="none">'
                       f'<title>{escape(s.label)}</title></polygon>')
        elif s.role == "scatter":
            out.append('<g class="scatter">')
            for x, y in zip(s.x, s.y):
                out.append(f'<circle cx="{_f(frame.px(x))}" cy="{_f(frame.py(y))}" r="1.5" fill="#1f77b4" fill-opacity="0.4"/>')
            out.append("</g>")
        else:
            out.append(f'<polyline class="median" points="{_points(frame, s.x, s.y)}" fill="none" stroke="#000" '
                       f'stroke-width="2"><title>{escape(s.label)}</title></polyline>')
    return out
