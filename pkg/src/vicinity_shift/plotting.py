"""Standalone SVG log-log chart of excess error against source sample size."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple
from xml.sax.saxutils import escape

from .experiment import SweepResult

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 190, 30, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
LABELS = {"VICINITY_K": "k-NN (vicinity)", "PMW_K": "k-NN (PMW)"}


@dataclass(frozen=True)
class Guideline:
    name: str
    points: Tuple[Tuple[float, float], ...]


def _log2(v):
    return math.log2(v) if v > 0 else None


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def emit_plot(result: SweepResult, guidelines: Sequence[Guideline], path, title: str = "") -> str:
    """Write the chart to ``path`` and return the SVG text."""
    if not result.records:
        raise ValueError("cannot plot an empty result")
    methods = sorted({m for (_, m, _) in result.aggregates})
    series = {}
    for m in methods:
        series[m] = sorted((n, a) for (_, mm, n), a in result.aggregates.items() if mm == m)

    xs = [math.log2(n) for pts in series.values() for n, _ in pts]
    ys = [
        _log2(v)
        for pts in series.values()
        for _, a in pts
        for v in (a.mean, a.q1, a.q3)
    ] + [_log2(v) for g in guidelines for _, v in g.points]
    ys = [y for y in ys if y is not None]
    x_lo, x_hi = min(xs), max(xs)
    if x_hi - x_lo < 1e-9:
        x_lo, x_hi = x_lo - 1, x_hi + 1
    y_lo, y_hi = (min(ys), max(ys)) if ys else (-10.0, 0.0)
    if y_hi - y_lo < 1e-9:
        y_lo, y_hi = y_lo - 1, y_hi + 1
    y_lo, y_hi = math.floor(y_lo), math.ceil(y_hi)
    x_lo, x_hi = math.floor(x_lo), math.ceil(x_hi)
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(lx):
        return LEFT + (lx - x_lo) / (x_hi - x_lo) * pw

    def py(v):
        ly = _log2(v)
        ly = y_lo if ly is None else ly
        return TOP + (y_hi - ly) / (y_hi - y_lo) * ph

    out: List[str] = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{LEFT}" y="18" font-family="sans-serif" font-size="13">{escape(title)}</text>')
    # axes and ticks
    out.append('<g id="axes" stroke="black" stroke-width="1" font-family="sans-serif" font-size="10">')
    out.append(f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}"/>')
    out.append(f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}"/>')
    for e in range(x_lo, x_hi + 1):
        x = _fmt(px(e))
        out.append(f'<line x1="{x}" y1="{TOP + ph}" x2="{x}" y2="{TOP + ph + 4}"/>')
        out.append(f'<text x="{x}" y="{TOP + ph + 16}" text-anchor="middle" stroke="none">2^{e}</text>')
    for e in range(y_lo, y_hi + 1):
        y = _fmt(TOP + (y_hi - e) / (y_hi - y_lo) * ph)
        out.append(f'<line x1="{LEFT - 4}" y1="{y}" x2="{LEFT}" y2="{y}"/>')
        out.append(f'<text x="{LEFT - 6}" y="{y}" text-anchor="end" dominant-baseline="middle" stroke="none">2^{e}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle" stroke="none">source sample size n_P</text>')
    out.append(
        f'<text x="16" y="{TOP + ph / 2:.1f}" text-anchor="middle" stroke="none" '
        f'transform="rotate(-90 16 {TOP + ph / 2:.1f})">excess error</text>'
    )
    out.append("</g>")

    legend = []
    for i, m in enumerate(methods):
        color = COLORS[i % len(COLORS)]
        pts = series[m]
        coords = " ".join(f"{_fmt(px(math.log2(n)))},{_fmt(py(a.mean))}" for n, a in pts)
        out.append(f'<g class="series" data-method="{escape(m)}">')
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for n, a in pts:
            x = _fmt(px(math.log2(n)))
            out.append(f'<line x1="{x}" y1="{_fmt(py(a.q1))}" x2="{x}" y2="{_fmt(py(a.q3))}" stroke="{color}"/>')
            out.append(f'<circle cx="{x}" cy="{_fmt(py(a.mean))}" r="2.5" fill="{color}"/>')
        out.append("</g>")
        legend.append((LABELS.get(m, m), color, None))
    for j, g in enumerate(guidelines):
        color = COLORS[j % len(COLORS)]
        coords = " ".join(f"{_fmt(px(math.log2(n)))},{_fmt(py(v))}" for n, v in g.points)
        out.append(
            f'<polyline class="guideline" points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="1" stroke-dasharray="5,3"/>'
        )
        legend.append((g.name, color, "5,3"))

    lx, ly = WIDTH - RIGHT + 15, TOP + 10
    out.append('<g id="legend" font-family="sans-serif" font-size="11">')
    for i, (name, color, dash) in enumerate(legend):
        y = ly + 18 * i
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<line x1="{lx}" y1="{y}" x2="{lx + 24}" y2="{y}" stroke="{color}" stroke-width="1.5"{extra}/>')
        out.append(f'<text x="{lx + 30}" y="{y + 4}">{escape(name)}</text>')
    out.append("</g>")
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    with open(path, "w") as fh:
        fh.write(text)
    return text
