"""Small self-contained SVG plots for sweep reports and trajectories.

Output is plain text with fixed number formatting, so the same input always
gives the same bytes.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .bench import BIN_EDGES, SweepReport
from .trajectory import Trajectory

BLUE = "#1f5fbf"
RED = "#c8302c"
PALETTE = ("#1f5fbf", "#c8302c", "#2e8b3a", "#8a4fbf", "#d98a1c", "#4a4a4a")


def _f(v: float) -> str:
    return f"{v:.2f}"


class _Canvas:
    def __init__(self, width: int, height: int):
        self.width, self.height = width, height
        self.parts: list[str] = []

    def add(self, element: str) -> None:
        self.parts.append(element)

    def text(self, x, y, s, size=12, anchor="middle", rotate=None):
        tr = f' transform="rotate({rotate} {_f(x)} {_f(y)})"' if rotate is not None else ""
        self.add(f'<text x="{_f(x)}" y="{_f(y)}" font-size="{size}" text-anchor="{anchor}"{tr}>{escape(s)}</text>')

    def line(self, x1, y1, x2, y2, stroke="#000", width=1.0, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.add(f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" stroke="{stroke}" '
                 f'stroke-width="{width}"{d}/>')

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}" font-family="sans-serif">')
        body = [f'<rect width="{self.width}" height="{self.height}" fill="#ffffff"/>'] + self.parts
        return "\n".join([head] + body + ["</svg>"]) + "\n"


class _Axes:
    """Maps data coordinates into a rectangle of a canvas."""

    def __init__(self, canvas, x0, y0, w, h, xlim, ylim):
        self.c, self.x0, self.y0, self.w, self.h = canvas, x0, y0, w, h
        self.xlim, self.ylim = xlim, ylim

    def px(self, x):
        lo, hi = self.xlim
        return self.x0 + (x - lo) / ((hi - lo) or 1.0) * self.w

    def py(self, y):
        lo, hi = self.ylim
        return self.y0 + self.h - (y - lo) / ((hi - lo) or 1.0) * self.h

    def frame(self, xlabel, ylabel, title, ticks=5):
        c = self.c
        c.add(f'<rect x="{_f(self.x0)}" y="{_f(self.y0)}" width="{_f(self.w)}" height="{_f(self.h)}" '
              'fill="none" stroke="#000"/>')
        for v in np.linspace(*self.xlim, ticks):
            x = self.px(v)
            c.line(x, self.y0 + self.h, x, self.y0 + self.h + 4)
            c.text(x, self.y0 + self.h + 16, f"{v:.3g}", size=10)
        for v in np.linspace(*self.ylim, ticks):
            y = self.py(v)
            c.line(self.x0 - 4, y, self.x0, y)
            c.text(self.x0 - 6, y + 3, f"{v:.3g}", size=10, anchor="end")
        c.text(self.x0 + self.w / 2, self.y0 + self.h + 34, xlabel)
        c.text(self.x0 - 40, self.y0 + self.h / 2, ylabel, rotate=-90)
        c.text(self.x0 + self.w / 2, self.y0 - 10, title, size=13)


def scatter(report: SweepReport) -> str:
    """(eta0, trust) plane per variant; blue marks success, red everything else."""
    spec = report.spec
    variants = list(report.variants)
    panel_w, panel_h = 320, 280
    c = _Canvas(80 + len(variants) * (panel_w + 80), panel_h + 100)
    for k, v in enumerate(variants):
        rep = report.variants[v]
        ax = _Axes(c, 70 + k * (panel_w + 80), 40, panel_w, panel_h, spec.eta0_range, spec.trust_range)
        ax.frame("eta0", "trust region", f"{v} ({rep.success_fraction:.0%} success)")
        for s in rep.samples:
            color = BLUE if s.success(spec.qstar) else RED
            c.add(f'<circle cx="{_f(ax.px(s.eta0))}" cy="{_f(ax.py(s.trust))}" r="3" fill="{color}"/>')
    return c.render()


def histograms(report: SweepReport) -> str:
    """q histograms per variant with a dashed line at q*."""
    qstar = report.spec.qstar
    variants = list(report.variants)
    labels = [f"{e * qstar:.3g}" for e in BIN_EDGES] + ["inf"]
    nb = len(BIN_EDGES)
    panel_w, panel_h = 320, 240
    top = max([max(r.histogram) for r in report.variants.values()] + [1])
    c = _Canvas(80 + len(variants) * (panel_w + 80), panel_h + 110)
    for k, v in enumerate(variants):
        rep = report.variants[v]
        ax = _Axes(c, 70 + k * (panel_w + 80), 40, panel_w, panel_h, (0, nb), (0, top))
        c.add(f'<rect x="{_f(ax.x0)}" y="{_f(ax.y0)}" width="{_f(ax.w)}" height="{_f(ax.h)}" '
              'fill="none" stroke="#000"/>')
        for b, count in enumerate(rep.histogram):
            color = BLUE if BIN_EDGES[b] < 1.0 else RED
            x, y = ax.px(b + 0.08), ax.py(count)
            c.add(f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(ax.px(b + 0.92) - x)}" '
                  f'height="{_f(ax.py(0) - y)}" fill="{color}"/>')
            c.text(ax.px(b + 0.5), y - 3, str(count), size=10)
        for b, lab in enumerate(labels):
            c.text(ax.px(b), ax.y0 + ax.h + 14, lab, size=9)
        xq = ax.px(BIN_EDGES.index(1.0))
        c.line(xq, ax.y0, xq, ax.y0 + ax.h, stroke="#000", width=1.5, dash="5,3")
        c.text(xq + 3, ax.y0 + 12, "q*", size=11, anchor="start")
        c.text(ax.x0 + ax.w / 2, ax.y0 + ax.h + 32, "q (m)")
        c.text(ax.x0 - 30, ax.y0 + ax.h / 2, "samples", rotate=-90)
        c.text(ax.x0 + ax.w / 2, ax.y0 - 10, v, size=13)
    return c.render()


def trajectory_plot(traj: Trajectory, lanes: dict | None = None) -> str:
    """Top-down paths of every player, with optional lane polylines."""
    pos = traj.positions()
    pts = [pos.reshape(-1, 2)]
    for poly in (lanes or {}).values():
        pts.append(np.asarray(poly, dtype=float))
    allp = np.vstack(pts)
    allp = allp[np.all(np.isfinite(allp), axis=1)]
    if not len(allp):
        allp = np.zeros((1, 2))
    lo, hi = allp.min(axis=0), allp.max(axis=0)
    span = float(max(hi - lo)) or 1.0
    center = (lo + hi) / 2
    lim = [(center[d] - 0.55 * span, center[d] + 0.55 * span) for d in range(2)]
    size = 460
    c = _Canvas(size + 100, size + 90)
    ax = _Axes(c, 70, 40, size, size, lim[0], lim[1])
    ax.frame("x (m)", "y (m)", "trajectories")
    for name in sorted(lanes or {}):
        poly = np.asarray(lanes[name], dtype=float)
        path = " ".join(f"{_f(ax.px(x))},{_f(ax.py(y))}" for x, y in poly)
        c.add(f'<polyline points="{path}" fill="none" stroke="#bbbbbb" stroke-width="6" '
              'stroke-linejoin="round" opacity="0.6"/>')
    for i in range(pos.shape[1]):
        color = PALETTE[i % len(PALETTE)]
        p = pos[:, i]
        p = p[np.all(np.isfinite(p), axis=1)]
        if not len(p):
            continue
        path = " ".join(f"{_f(ax.px(x))},{_f(ax.py(y))}" for x, y in p)
        c.add(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
        c.add(f'<circle cx="{_f(ax.px(p[0, 0]))}" cy="{_f(ax.py(p[0, 1]))}" r="4" fill="{color}"/>')
        c.text(ax.px(p[-1, 0]) + 6, ax.py(p[-1, 1]) - 6, f"P{i}", size=11, anchor="start")
    return c.render()
