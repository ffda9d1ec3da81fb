"""Scaled cross-entropy curves and a small dependency-free SVG line chart."""
from __future__ import annotations

import csv
import io
from xml.sax.saxutils import escape

import numpy as np

from .errors import ConfigError
from .losses import scaled_cross_entropy

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def peaked_distribution(max_prob, num_classes):
    """Rows with ``max_prob`` on class 0 and the rest spread evenly over the others."""
    m = np.atleast_1d(np.asarray(max_prob, dtype=float))
    rest = (1.0 - m) / (num_classes - 1)
    out = np.repeat(rest[:, None], num_classes, axis=1)
    out[:, 0] = m
    return out


def scaled_ce_curves(alphas, num_classes=10, points=1000, lo=None, hi=1.0):
    """``H_alpha(p, p)`` for ``p`` whose max probability sweeps ``[lo, hi]``.

    ``lo`` defaults to ``1 / num_classes`` (the uniform distribution).
    Returns the grid and a dict alpha -> curve.
    """
    if num_classes < 2:
        raise ConfigError("num_classes must be >= 2")
    lo = 1.0 / num_classes if lo is None else lo
    if not 0 < lo < hi <= 1:
        raise ConfigError(f"bad sweep range [{lo}, {hi}]")
    grid = np.linspace(lo, hi, points)
    p = peaked_distribution(grid, num_classes)
    return grid, {float(a): scaled_cross_entropy(p, p, a) for a in alphas}


def curves_csv(grid, curves):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["max_prob"] + [f"alpha={a:g}" for a in curves])
    for i, x in enumerate(grid):
        w.writerow([f"{x:.6f}"] + [f"{c[i]:.9g}" for c in curves.values()])
    return buf.getvalue()


def _ticks(lo, hi, n=5):
    return np.linspace(lo, hi, n)


def line_chart_svg(x, series, title="", xlabel="", ylabel="", width=640, height=420):
    """Render ``series`` (label -> y array over the shared ``x``) as an SVG string."""
    x = np.asarray(x, dtype=float)
    ml, mr, mt, mb = 64, 140, 36, 52
    pw, ph = width - ml - mr, height - mt - mb
    ys = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
    x0, x1 = float(x.min()), float(x.max())
    y0, y1 = min(0.0, float(ys.min())), float(ys.max())
    if y1 <= y0:
        y1 = y0 + 1.0
    if x1 <= x0:
        x1 = x0 + 1.0

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>',
    ]
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{sx(t):.1f}" y1="{mt + ph}" x2="{sx(t):.1f}" y2="{mt + ph + 5}" stroke="#333"/>')
        out.append(f'<text x="{sx(t):.1f}" y="{mt + ph + 18}" text-anchor="middle">{t:.2f}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{ml - 5}" y1="{sy(t):.1f}" x2="{ml}" y2="{sy(t):.1f}" stroke="#333"/>')
        out.append(f'<text x="{ml - 8}" y="{sy(t) + 4:.1f}" text-anchor="end">{t:.2f}</text>')
    for i, (label, y) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, np.asarray(y, dtype=float)))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{pts}"/>')
        ly = mt + 14 + 18 * i
        out.append(f'<line x1="{ml + pw + 12}" y1="{ly}" x2="{ml + pw + 36}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 42}" y="{ly + 4}">{escape(str(label))}</text>')
    if title:
        out.append(f'<text x="{ml + pw / 2}" y="{mt - 12}" text-anchor="middle" font-size="14">{escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{ml + pw / 2}" y="{height - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        out.append(
            f'<text x="16" y="{mt + ph / 2}" text-anchor="middle" '
            f'transform="rotate(-90 16 {mt + ph / 2})">{escape(ylabel)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
