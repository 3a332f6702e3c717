"""Minimal deterministic SVG emitter for volume-vs-horizon curves.

Hand-rolled so that byte-identical inputs produce byte-identical files;
no timestamps, no library version strings, fixed float formatting.
"""
from __future__ import annotations

import math
from typing import Sequence

from .estimation import RateFit

_W, _H = 640.0, 420.0
_ML, _MR, _MT, _MB = 70.0, 20.0, 30.0, 50.0


def _fmt(v: float) -> str:
    return format(v, ".2f")


def _sci(v: float) -> str:
    return format(v, ".3g")


def emit_plot(series: Sequence[tuple[float, float, float]], fit: RateFit | None,
              path: str, title: str = "volume decay") -> None:
    """Write a log-y line plot with error bars and an optional fitted line.

    ``series`` holds (x, y, yerr) triples; y values must be positive to be
    drawn (zero-volume horizons are skipped).  At least 2 drawable points
    are required.
    """
    pts = [(float(x), float(y), float(e)) for x, y, e in series if y > 0.0]
    if len(pts) < 2:
        raise ValueError(f"need at least 2 positive points to plot, got {len(pts)}")
    xs = [p[0] for p in pts]
    ylo = min(max(y - e, y * 1e-3) for _, y, e in pts)
    yhi = max(y + e for _, y, e in pts)
    lx0, lx1 = min(xs), max(xs)
    ly0, ly1 = math.log10(ylo), math.log10(yhi)
    if lx1 - lx0 <= 0:
        lx1 = lx0 + 1.0
    if ly1 - ly0 <= 1e-12:
        ly0, ly1 = ly0 - 0.5, ly1 + 0.5
    pad = 0.06
    lx0, lx1 = lx0 - pad * (lx1 - lx0), lx1 + pad * (lx1 - lx0)
    ly0, ly1 = ly0 - pad * (ly1 - ly0), ly1 + pad * (ly1 - ly0)

    def px(x: float) -> float:
        return _ML + (x - lx0) / (lx1 - lx0) * (_W - _ML - _MR)

    def py(y: float) -> float:
        return _H - _MB - (math.log10(y) - ly0) / (ly1 - ly0) * (_H - _MT - _MB)

    out: list[str] = []
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{int(_W)}" '
               f'height="{int(_H)}" viewBox="0 0 {int(_W)} {int(_H)}">')
    out.append(f'<rect width="{int(_W)}" height="{int(_H)}" fill="white"/>')
    out.append(f'<text x="{_fmt(_W / 2)}" y="20" text-anchor="middle" '
               f'font-family="monospace" font-size="14">{title}</text>')
    # axes
    out.append(f'<line x1="{_fmt(_ML)}" y1="{_fmt(_H - _MB)}" x2="{_fmt(_W - _MR)}" '
               f'y2="{_fmt(_H - _MB)}" stroke="black"/>')
    out.append(f'<line x1="{_fmt(_ML)}" y1="{_fmt(_MT)}" x2="{_fmt(_ML)}" '
               f'y2="{_fmt(_H - _MB)}" stroke="black"/>')
    for i in range(5):
        fx = lx0 + (lx1 - lx0) * i / 4
        out.append(f'<line x1="{_fmt(px(fx))}" y1="{_fmt(_H - _MB)}" '
                   f'x2="{_fmt(px(fx))}" y2="{_fmt(_H - _MB + 5)}" stroke="black"/>')
        out.append(f'<text x="{_fmt(px(fx))}" y="{_fmt(_H - _MB + 20)}" '
                   f'text-anchor="middle" font-family="monospace" font-size="11">'
                   f'{_sci(fx)}</text>')
        ly = ly0 + (ly1 - ly0) * i / 4
        out.append(f'<line x1="{_fmt(_ML - 5)}" y1="{_fmt(py(10**ly))}" '
                   f'x2="{_fmt(_ML)}" y2="{_fmt(py(10**ly))}" stroke="black"/>')
        out.append(f'<text x="{_fmt(_ML - 8)}" y="{_fmt(py(10**ly) + 4)}" '
                   f'text-anchor="end" font-family="monospace" font-size="11">'
                   f'{_sci(10**ly)}</text>')
    # fitted line drawn under the data
    if fit is not None:
        xa, xb = min(xs), max(xs)
        ya = math.exp(fit.intercept + fit.slope * xa)
        yb = math.exp(fit.intercept + fit.slope * xb)
        out.append(f'<line x1="{_fmt(px(xa))}" y1="{_fmt(py(ya))}" '
                   f'x2="{_fmt(px(xb))}" y2="{_fmt(py(yb))}" '
                   f'stroke="firebrick" stroke-dasharray="6,3"/>')
        out.append(f'<text x="{_fmt(_W - _MR)}" y="{_fmt(_MT + 14)}" text-anchor="end" '
                   f'font-family="monospace" font-size="12" fill="firebrick">'
                   f'slope = {format(fit.slope, ".3f")}</text>')
    # error bars and markers
    for x, y, e in pts:
        if e > 0.0:
            lo = max(y - e, y * 1e-3)
            out.append(f'<line x1="{_fmt(px(x))}" y1="{_fmt(py(lo))}" '
                       f'x2="{_fmt(px(x))}" y2="{_fmt(py(y + e))}" stroke="steelblue"/>')
    poly = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y, _ in pts)
    out.append(f'<polyline points="{poly}" fill="none" stroke="steelblue"/>')
    for x, y, _ in pts:
        out.append(f'<circle cx="{_fmt(px(x))}" cy="{_fmt(py(y))}" r="3" '
                   f'fill="steelblue"/>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")
