"""Self-contained SVG reports from trace tables.

One vertical panel per quantity: position tracking (reference against
measured), velocity tracking, the two tracking errors, and motor
torque.  Output is deterministic text: the same trace always renders
to the same bytes, so reports can be snapshot-tested.
"""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

__all__ = ["REQUIRED_COLUMNS", "render_svg", "write_report_svg"]

REQUIRED_COLUMNS = ("t", "x1", "x1d", "x2", "x2d", "tau_m")

# geometry (px)
_WIDTH = 880
_PANEL_H = 170
_MARGIN_L = 72
_MARGIN_R = 16
_MARGIN_T = 34
_MARGIN_B = 30
_MAX_POINTS = 2000

_SERIES_COLORS = ("#1f77b4", "#d62728")


def _fmt(v: float) -> str:
    """Short stable number text for coordinates and tick labels."""
    if v == 0.0:
        return "0"
    out = f"{v:.6g}"
    return out


def _ticks(lo: float, hi: float, target: int = 5):
    """Round tick positions covering [lo, hi]."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return [0.0]
    if hi <= lo:
        pad = 1.0 if lo == 0.0 else abs(lo) * 0.5
        lo, hi = lo - pad, hi + pad
    span = hi - lo
    raw = span / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    out = []
    v = first
    while v <= hi + 1e-9 * step:
        out.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return out or [lo]


class _Panel:
    def __init__(self, title, ylabel, index):
        self.title = title
        self.ylabel = ylabel
        self.top = index * _PANEL_H
        self.x0 = _MARGIN_L
        self.x1 = _WIDTH - _MARGIN_R
        self.y0 = self.top + _MARGIN_T
        self.y1 = self.top + _PANEL_H - _MARGIN_B
        self.series = []

    def add(self, t, y, label):
        self.series.append((np.asarray(t, float), np.asarray(y, float),
                            label))

    def _limits(self):
        tmin = min(float(s[0][0]) for s in self.series)
        tmax = max(float(s[0][-1]) for s in self.series)
        ymin = min(float(np.min(s[1])) for s in self.series)
        ymax = max(float(np.max(s[1])) for s in self.series)
        if ymax <= ymin:
            pad = 1.0 if ymin == 0.0 else abs(ymin) * 0.1
            ymin, ymax = ymin - pad, ymax + pad
        else:
            pad = 0.06 * (ymax - ymin)
            ymin, ymax = ymin - pad, ymax + pad
        if tmax <= tmin:
            tmax = tmin + 1.0
        return tmin, tmax, ymin, ymax

    def render(self, out):
        tmin, tmax, ymin, ymax = self._limits()

        def px(t):
            return self.x0 + (t - tmin) / (tmax - tmin) * (self.x1 - self.x0)

        def py(v):
            return self.y1 - (v - ymin) / (ymax - ymin) * (self.y1 - self.y0)

        out.append(f'<g class="panel">')
        out.append(
            f'<rect x="{self.x0}" y="{self.y0}" '
            f'width="{self.x1 - self.x0}" height="{self.y1 - self.y0}" '
            f'fill="none" stroke="#333" stroke-width="1"/>')
        out.append(
            f'<text x="{self.x0}" y="{self.y0 - 10}" class="title">'
            f'{self.title}</text>')
        for tv in _ticks(tmin, tmax):
            x = _fmt(px(tv))
            out.append(
                f'<line x1="{x}" y1="{_fmt(self.y1)}" x2="{x}" '
                f'y2="{_fmt(self.y1 + 4)}" stroke="#333"/>')
            out.append(
                f'<text x="{x}" y="{_fmt(self.y1 + 16)}" '
                f'class="tick" text-anchor="middle">{_fmt(tv)}</text>')
        for yv in _ticks(ymin, ymax, 4):
            y = _fmt(py(yv))
            out.append(
                f'<line x1="{_fmt(self.x0 - 4)}" y1="{y}" '
                f'x2="{_fmt(self.x0)}" y2="{y}" stroke="#333"/>')
            out.append(
                f'<text x="{_fmt(self.x0 - 7)}" y="{y}" class="tick" '
                f'text-anchor="end" dominant-baseline="middle">'
                f'{_fmt(yv)}</text>')
        out.append(
            f'<text x="{self.x1}" y="{_fmt(self.y1 + 16)}" class="label" '
            f'text-anchor="end">t [s]</text>')
        out.append(
            f'<text x="{_fmt(self.x0 - 58)}" '
            f'y="{_fmt((self.y0 + self.y1) / 2)}" class="label" '
            f'transform="rotate(-90 {_fmt(self.x0 - 58)} '
            f'{_fmt((self.y0 + self.y1) / 2)})" text-anchor="middle">'
            f'{self.ylabel}</text>')
        for k, (t, y, label) in enumerate(self.series):
            color = _SERIES_COLORS[k % len(_SERIES_COLORS)]
            stride = max(1, (len(t) + _MAX_POINTS - 1) // _MAX_POINTS)
            ts, ys = t[::stride], y[::stride]
            pts = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}"
                           for a, b in zip(ts, ys))
            out.append(
                f'<polyline points="{pts}" fill="none" stroke="{color}" '
                f'stroke-width="1.2"/>')
            lx = self.x0 + 8 + 150 * k
            ly = self.y0 + 12
            out.append(
                f'<line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" '
                f'stroke="{color}" stroke-width="1.8"/>')
            out.append(
                f'<text x="{lx + 23}" y="{ly}" class="tick" '
                f'dominant-baseline="middle">{label}</text>')
        out.append('</g>')


def render_svg(trace: Mapping[str, np.ndarray]) -> str:
    """Render the five standard panels into one SVG document."""
    missing = [c for c in REQUIRED_COLUMNS if c not in trace]
    if missing:
        raise ValueError("trace is missing columns: " + ", ".join(missing))
    t = np.asarray(trace["t"], dtype=float)
    if t.size == 0:
        raise ValueError("empty trace")

    x1 = np.asarray(trace["x1"], float)
    x1d = np.asarray(trace["x1d"], float)
    x2 = np.asarray(trace["x2"], float)
    x2d = np.asarray(trace["x2d"], float)
    tau = np.asarray(trace["tau_m"], float)

    panels = []
    p = _Panel("Position tracking", "x_L [m]", 0)
    p.add(t, x1d, "reference")
    p.add(t, x1, "measured")
    panels.append(p)
    p = _Panel("Velocity tracking", "v_L [m/s]", 1)
    p.add(t, x2d, "reference")
    p.add(t, x2, "measured")
    panels.append(p)
    p = _Panel("Position tracking error", "x_1d - x_1 [m]", 2)
    p.add(t, x1d - x1, "error")
    panels.append(p)
    p = _Panel("Velocity tracking error", "x_2d - x_2 [m/s]", 3)
    p.add(t, x2d - x2, "error")
    panels.append(p)
    p = _Panel("Motor torque", "tau_m [N m]", 4)
    p.add(t, tau, "torque")
    panels.append(p)

    height = len(panels) * _PANEL_H
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
        f'height="{height}" viewBox="0 0 {_WIDTH} {height}">',
        '<style>text{font-family:Helvetica,Arial,sans-serif}'
        '.title{font-size:13px;font-weight:bold}'
        '.tick{font-size:10px}.label{font-size:11px}</style>',
        f'<rect width="{_WIDTH}" height="{height}" fill="#ffffff"/>',
    ]
    for p in panels:
        p.render(out)
    out.append('</svg>')
    return "\n".join(out) + "\n"


def write_report_svg(trace: Mapping[str, np.ndarray], path) -> None:
    svg = render_svg(trace)
    with open(path, "w") as fh:
        fh.write(svg)
