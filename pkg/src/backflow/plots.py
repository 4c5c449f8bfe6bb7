"""Static SVG charts, rendered by hand for byte-stable output.

No plotting library: identical inputs must give identical files so chart
snapshots can be golden-tested.  Coordinates are written with fixed
precision and groups are sorted before drawing.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DatasetCorruptionError, DomainError
from .storage import read_results_csv

_SERIES = {"R": "#c0392b", "Z": "#2471a3"}

_PANEL_W = 420
_PANEL_H = 330
_MARGIN = {"left": 62, "right": 16, "top": 34, "bottom": 46}


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _fmt_tick(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1000 or abs(v) < 0.01:
        return f"{v:.1e}"
    return f"{v:.4g}"


def _nice_ticks(lo: float, hi: float, target: int = 5) -> list:
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    raw = span / target
    mag = 10.0 ** np.floor(np.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if mult * mag >= raw:
            step = mult * mag
            break
    first = np.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * span:
        ticks.append(0.0 if abs(t) < 1e-12 * span else float(t))
        t += step
    return ticks


class _Canvas:
    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self.parts: list = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
        ]

    def line(self, x1, y1, x2, y2, color="#333333", width=1.0, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
            f'stroke="{color}" stroke-width="{width}"{d}/>'
        )

    def polyline(self, pts, color, width=1.5, dash=None):
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="{width}"{d}/>'
        )

    def circle(self, x, y, r, color):
        self.parts.append(
            f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{r}" fill="{color}"/>'
        )

    def square(self, x, y, half, color):
        self.parts.append(
            f'<rect x="{_fmt(x - half)}" y="{_fmt(y - half)}" width="{2 * half}" '
            f'height="{2 * half}" fill="{color}"/>'
        )

    def text(self, x, y, s, size=11, anchor="middle", color="#222222", rotate=None):
        r = f' transform="rotate({rotate} {_fmt(x)} {_fmt(y)})"' if rotate is not None else ""
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" fill="{color}" '
            f'text-anchor="{anchor}"{r}>{s}</text>'
        )

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


class _Axes:
    """Maps data coordinates into one panel's pixel box."""

    def __init__(self, canvas, ox, oy, xlim, ylim):
        self.canvas = canvas
        self.x0 = ox + _MARGIN["left"]
        self.y0 = oy + _MARGIN["top"]
        self.w = _PANEL_W - _MARGIN["left"] - _MARGIN["right"]
        self.h = _PANEL_H - _MARGIN["top"] - _MARGIN["bottom"]
        self.xlim = xlim
        self.ylim = ylim

    def px(self, x):
        lo, hi = self.xlim
        return self.x0 + (x - lo) / (hi - lo) * self.w

    def py(self, y):
        lo, hi = self.ylim
        return self.y0 + self.h - (y - lo) / (hi - lo) * self.h

    def frame(self, title, xlabel, ylabel):
        c = self.canvas
        c.line(self.x0, self.y0 + self.h, self.x0 + self.w, self.y0 + self.h)
        c.line(self.x0, self.y0, self.x0, self.y0 + self.h)
        c.text(self.x0 + self.w / 2, self.y0 - 12, title, size=12)
        c.text(self.x0 + self.w / 2, self.y0 + self.h + 34, xlabel)
        c.text(self.x0 - 44, self.y0 + self.h / 2, ylabel, rotate=-90)
        for t in _nice_ticks(*self.xlim):
            x = self.px(t)
            c.line(x, self.y0 + self.h, x, self.y0 + self.h + 4)
            c.text(x, self.y0 + self.h + 16, _fmt_tick(t), size=10)
        for t in _nice_ticks(*self.ylim):
            y = self.py(t)
            c.line(self.x0 - 4, y, self.x0, y)
            c.line(self.x0, y, self.x0 + self.w, y, color="#e5e5e5", width=0.5)
            c.text(self.x0 - 7, y + 3.5, _fmt_tick(t), size=10, anchor="end")


def _pad_limits(lo: float, hi: float) -> tuple:
    if hi <= lo:
        pad = 0.5 if lo == 0 else abs(lo) * 0.1 + 1e-12
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.06
    return lo - pad, hi + pad


def emit_metrics_svg(results_csv, out_path) -> None:
    """One panel per (flow kind, viscosity): scale vs mean relative MAE,
    both components, error bars at one sample standard deviation."""
    rows = read_results_csv(results_csv)
    if not rows:
        raise DatasetCorruptionError(f"{results_csv} contains no metric rows")
    groups: dict = {}
    for row in rows:
        groups.setdefault((row["flow_kind"], row["nu"]), []).append(row)
    keys = sorted(groups)
    width = _PANEL_W * len(keys)
    canvas = _Canvas(width, _PANEL_H)
    for gi, key in enumerate(keys):
        kind, nu = key
        data = groups[key]
        ys = [r["mean_rel_mae"] - r["std"] for r in data] + [
            r["mean_rel_mae"] + r["std"] for r in data
        ]
        xs = [r["s"] for r in data]
        ylo, yhi = min(ys), max(ys)
        if ylo > 0 and ylo < 0.25 * yhi:
            ylo = 0.0
        ax = _Axes(canvas, gi * _PANEL_W, 0, _pad_limits(min(xs), max(xs)), _pad_limits(ylo, yhi))
        ax.frame(f"{kind}, nu={nu:g}", "s", "relative MAE")
        for comp in ("R", "Z"):
            series = sorted(
                (r for r in data if r["component"] == comp), key=lambda r: r["s"]
            )
            if not series:
                continue
            color = _SERIES[comp]
            pts = [(ax.px(r["s"]), ax.py(r["mean_rel_mae"])) for r in series]
            for r in series:
                x = ax.px(r["s"])
                y1 = ax.py(r["mean_rel_mae"] - r["std"])
                y2 = ax.py(r["mean_rel_mae"] + r["std"])
                ax.canvas.line(x, y1, x, y2, color=color, width=1.0)
                ax.canvas.line(x - 3, y1, x + 3, y1, color=color, width=1.0)
                ax.canvas.line(x - 3, y2, x + 3, y2, color=color, width=1.0)
            if len(pts) > 1:
                canvas.polyline(pts, color)
            for x, y in pts:
                if comp == "R":
                    canvas.circle(x, y, 3.0, color)
                else:
                    canvas.square(x, y, 2.6, color)
        lx = ax.x0 + ax.w - 58
        for li, comp in enumerate(("R", "Z")):
            ly = ax.y0 + 10 + 15 * li
            if comp == "R":
                canvas.circle(lx, ly - 3.5, 3.0, _SERIES[comp])
            else:
                canvas.square(lx, ly - 3.5, 2.6, _SERIES[comp])
            canvas.text(lx + 10, ly, comp, size=11, anchor="start")
    Path(out_path).write_text(canvas.render())


def emit_trajectory_svg(
    times: np.ndarray,
    states: np.ndarray,
    out_path,
    count: int = 8,
    overlay: np.ndarray | None = None,
    labels: tuple = ("forward", "reconstructed"),
) -> None:
    """Two stacked panels (radial on top, axial below) overlaying the first
    `count` trajectories; an optional second path array draws dashed."""
    states = np.asarray(states, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    if states.ndim != 3 or states.shape[2] != 2:
        raise DomainError(f"states must have shape (N, L, 2), got {states.shape}")
    if times.shape != (states.shape[1],):
        raise DomainError("times length must match the trajectory length")
    if count < 1:
        raise DomainError("count must be >= 1")
    if overlay is not None:
        overlay = np.asarray(overlay, dtype=np.float64)
        if overlay.shape[1:] != states.shape[1:]:
            raise DomainError("overlay paths must match the trajectory shape")
    n = min(count, states.shape[0])
    shown = states[:n]
    over = overlay[: min(count, overlay.shape[0])] if overlay is not None else None
    canvas = _Canvas(_PANEL_W, 2 * _PANEL_H)
    names = ("radial component", "axial component")
    for ci in range(2):
        vals = [shown[:, :, ci]]
        if over is not None:
            vals.append(over[:, :, ci])
        allv = np.concatenate([v.ravel() for v in vals])
        ax = _Axes(
            canvas,
            0,
            ci * _PANEL_H,
            _pad_limits(float(times.min()), float(times.max())),
            _pad_limits(float(allv.min()), float(allv.max())),
        )
        ax.frame(names[ci], "t", "position")
        color = _SERIES["R" if ci == 0 else "Z"]
        for path in shown:
            pts = [(ax.px(t), ax.py(v)) for t, v in zip(times, path[:, ci])]
            canvas.polyline(pts, color, width=0.9)
        if over is not None:
            for path in over:
                pts = [(ax.px(t), ax.py(v)) for t, v in zip(times, path[:, ci])]
                canvas.polyline(pts, "#555555", width=0.9, dash="4,3")
        if over is not None:
            canvas.text(ax.x0 + 6, ax.y0 + 12, labels[0], size=10, anchor="start", color=color)
            canvas.text(ax.x0 + 6, ax.y0 + 26, labels[1], size=10, anchor="start", color="#555555")
    Path(out_path).write_text(canvas.render())
