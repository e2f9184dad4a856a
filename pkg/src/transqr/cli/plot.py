"""Minimal deterministic SVG line chart of mean estimation error."""

from __future__ import annotations

import math
from collections import defaultdict
from xml.sax.saxutils import escape

from ..core import InvalidInputError
from .config import METHODS

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf",
           "#7f7f7f")
WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 30, 60


def mean_errors(rows, group_by=("method",)) -> dict:
    """{group label: [(num_transferable, mean l2_error), ...]} over finite errors."""
    if isinstance(group_by, str):
        group_by = (group_by,)
    acc = defaultdict(list)
    for r in rows:
        if math.isfinite(r.l2_error):
            key = tuple(getattr(r, g) for g in group_by)
            acc[key, r.num_transferable].append(r.l2_error)
    series = defaultdict(list)
    for (key, x), vals in acc.items():
        series[key].append((x, math.fsum(vals) / len(vals)))
    order = {m: i for i, m in enumerate(METHODS)}

    def sort_key(key):
        return tuple((order.get(k, len(order)), str(k)) if isinstance(k, str) else (0, k)
                     for k in key)

    out = {}
    for key in sorted(series, key=sort_key):
        label = " ".join(f"{g}={k}" if g != "method" else str(k) for g, k in zip(group_by, key))
        out[label] = sorted(series[key])
    return out


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def render_svg(series: dict) -> str:
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = 0.0, max(ys) * 1.1 if max(ys) > 0 else 1.0
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def sx(x):
        return LEFT + (pw * (x - x_lo) / (x_hi - x_lo) if x_hi > x_lo else pw / 2)

    def sy(y):
        return TOP + ph - ph * (y - y_lo) / (y_hi - y_lo)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" '
        'font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}" stroke="black"/>',
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>',
    ]
    for x in sorted(set(xs)):
        px = sx(x)
        out.append(f'<line x1="{px:.2f}" y1="{TOP + ph}" x2="{px:.2f}" y2="{TOP + ph + 5}" '
                   'stroke="black"/>')
        out.append(f'<text x="{px:.2f}" y="{TOP + ph + 18}" text-anchor="middle">{x:g}</text>')
    for y in _ticks(y_lo, y_hi):
        py = sy(y)
        out.append(f'<line x1="{LEFT - 5}" y1="{py:.2f}" x2="{LEFT}" y2="{py:.2f}" '
                   'stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{py + 4:.2f}" text-anchor="end">{y:.3g}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 15}" text-anchor="middle">'
               'number of transferable sources</text>')
    out.append(f'<text x="18" y="{TOP + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {TOP + ph / 2:.2f})">mean l2 estimation error</text>')
    for i, (label, pts) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" '
                   f'points="{coords}"/>')
        for x, y in pts:
            out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="{color}"/>')
        ly = TOP + 10 + 20 * i
        lx = LEFT + pw + 15
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" '
                   'stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg_plot(rows, group_by=("method",), path=None) -> str:
    """Write the chart to ``path`` (if given) and return the SVG text."""
    rows = list(rows)
    if not rows:
        raise InvalidInputError("no rows to plot")
    series = mean_errors(rows, group_by)
    if not series:
        raise InvalidInputError("no finite errors to plot")
    svg = render_svg(series)
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(svg)
    return svg
