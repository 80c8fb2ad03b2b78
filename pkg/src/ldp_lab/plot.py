"""Minimal native SVG log-log scatter with a fitted line."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

W, H = 640, 440
MARGIN = dict(left=80, right=30, top=50, bottom=60)


def _decades(lo, hi):
    return list(range(math.floor(lo), math.ceil(hi) + 1))


def loglog_svg(series: dict, xlabel: str, ylabel: str, title: str = "", header_lines=(),
               fits: dict | None = None) -> str:
    """``series`` maps a name to a list of (x, y); ``fits`` maps the same names
    to (slope, intercept, r2) in log2 space."""
    pts = [(x, y) for s in series.values() for x, y in s]
    if not pts:
        raise ValueError("nothing to plot")
    xs = np.log2([p[0] for p in pts])
    ys = np.log2([p[1] for p in pts])
    x0, x1 = xs.min() - 0.25, xs.max() + 0.25
    y0, y1 = ys.min() - 0.5, ys.max() + 0.5
    pw = W - MARGIN["left"] - MARGIN["right"]
    ph = H - MARGIN["top"] - MARGIN["bottom"]

    def sx(v):
        return MARGIN["left"] + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return MARGIN["top"] + (1 - (v - y0) / (y1 - y0)) * ph

    out = [f"<!-- {escape(h)} -->" for h in header_lines]
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
               f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">')
    out.append(f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>')
    out.append(f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
               f'fill="none" stroke="black"/>')
    for d in _decades(x0, x1):
        if x0 <= d <= x1:
            out.append(f'<line x1="{sx(d):.1f}" y1="{MARGIN["top"] + ph}" x2="{sx(d):.1f}" '
                       f'y2="{MARGIN["top"] + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{sx(d):.1f}" y="{MARGIN["top"] + ph + 20}" '
                       f'text-anchor="middle">2^{d}</text>')
    for d in _decades(y0, y1):
        if y0 <= d <= y1:
            out.append(f'<line x1="{MARGIN["left"] - 5}" y1="{sy(d):.1f}" x2="{MARGIN["left"]}" '
                       f'y2="{sy(d):.1f}" stroke="black"/>')
            out.append(f'<text x="{MARGIN["left"] - 8}" y="{sy(d) + 4:.1f}" '
                       f'text-anchor="end">2^{d}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2}" y="{H - 15}" text-anchor="middle">'
               f'{escape(xlabel)} (log scale)</text>')
    out.append(f'<text x="18" y="{MARGIN["top"] + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 18 {MARGIN["top"] + ph / 2})">{escape(ylabel)} (log scale)</text>')
    if title:
        out.append(f'<text x="{W / 2}" y="28" text-anchor="middle" font-size="15">{escape(title)}</text>')
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    for n, (name, s) in enumerate(series.items()):
        c = colors[n % len(colors)]
        for x, y in s:
            out.append(f'<circle cx="{sx(math.log2(x)):.1f}" cy="{sy(math.log2(y)):.1f}" r="4" fill="{c}"/>')
        label = escape(str(name))
        if fits and name in fits:
            slope, icpt, r2 = fits[name]
            lx = np.log2([x for x, _ in s])
            a, b = lx.min(), lx.max()
            out.append(f'<line x1="{sx(a):.1f}" y1="{sy(slope * a + icpt):.1f}" x2="{sx(b):.1f}" '
                       f'y2="{sy(slope * b + icpt):.1f}" stroke="{c}" stroke-dasharray="6,3"/>')
            label += f": slope {slope:.3f} (R² {r2:.3f})"
        out.append(f'<text x="{MARGIN["left"] + 10}" y="{MARGIN["top"] + 18 + 16 * n}" fill="{c}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
