"""Minimal SVG 1.1 line charts (axes, polylines, labels) with deterministic output."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 720, 420
LEFT, RIGHT, TOP, BOTTOM = 80, 150, 40, 60
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray


@dataclass
class Chart:
    title: str
    xlabel: str
    ylabel: str
    series: list[Series] = field(default_factory=list)
    hlines: list[tuple[float, str]] = field(default_factory=list)

    def add(self, label: str, x, y) -> "Chart":
        self.series.append(Series(label, np.asarray(x, dtype=float), np.asarray(y, dtype=float)))
        return self

    def render(self) -> str:
        return render(self)

    def write(self, path):
        Path(path).write_text(self.render(), encoding="utf-8")


def _n(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:.4g}"


def _range(values: list[float]) -> tuple[float, float]:
    finite = [v for v in values if math.isfinite(v)]
    if not finite:
        return 0.0, 1.0
    lo, hi = min(finite), max(finite)
    if lo == hi:
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    return lo, hi


def _runs(x: np.ndarray, y: np.ndarray):
    """Split a series into runs of consecutive finite points."""
    ok = np.isfinite(x) & np.isfinite(y)
    start = None
    for i, good in enumerate(ok):
        if good and start is None:
            start = i
        elif not good and start is not None:
            yield start, i
            start = None
    if start is not None:
        yield start, len(ok)


def render(chart: Chart) -> str:
    xs = [float(v) for s in chart.series for v in s.x]
    ys = [float(v) for s in chart.series for v in s.y] + [v for v, _ in chart.hlines]
    x0, x1 = _range(xs)
    y0, y1 = _range(ys)
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(v):
        return LEFT + (v - x0) / (x1 - x0) * pw

    def py(v):
        return TOP + ph - (v - y0) / (y1 - y0) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{_n(LEFT + pw / 2)}" y="{_n(TOP / 2 + 6)}" text-anchor="middle" font-family="sans-serif" '
        f'font-size="15">{escape(chart.title)}</text>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for i in range(6):
        tx = x0 + (x1 - x0) * i / 5
        ty = y0 + (y1 - y0) * i / 5
        out.append(f'<line x1="{_n(px(tx))}" y1="{TOP + ph}" x2="{_n(px(tx))}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{_n(px(tx))}" y="{TOP + ph + 20}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="11">{_tick_label(tx)}</text>')
        out.append(f'<line x1="{LEFT - 5}" y1="{_n(py(ty))}" x2="{LEFT}" y2="{_n(py(ty))}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{_n(py(ty) + 4)}" text-anchor="end" font-family="sans-serif" '
                   f'font-size="11">{_tick_label(ty)}</text>')
    out.append(f'<text x="{_n(LEFT + pw / 2)}" y="{HEIGHT - 15}" text-anchor="middle" font-family="sans-serif" '
               f'font-size="13">{escape(chart.xlabel)}</text>')
    cy = TOP + ph / 2
    out.append(f'<text x="20" y="{_n(cy)}" text-anchor="middle" font-family="sans-serif" font-size="13" '
               f'transform="rotate(-90 20 {_n(cy)})">{escape(chart.ylabel)}</text>')
    for value, label in chart.hlines:
        y = _n(py(value))
        out.append(f'<line x1="{LEFT}" y1="{y}" x2="{LEFT + pw}" y2="{y}" stroke="gray" '
                   f'stroke-dasharray="6,4"/>')
        out.append(f'<text x="{LEFT + pw + 6}" y="{_n(py(value) + 4)}" font-family="sans-serif" '
                   f'font-size="11" fill="gray">{escape(label)}</text>')
    for idx, s in enumerate(chart.series):
        color = COLORS[idx % len(COLORS)]
        for a, b in _runs(s.x, s.y):
            if b - a == 1:
                out.append(f'<circle cx="{_n(px(s.x[a]))}" cy="{_n(py(s.y[a]))}" r="3" fill="{color}"/>')
            else:
                pts = " ".join(f"{_n(px(u))},{_n(py(v))}" for u, v in zip(s.x[a:b], s.y[a:b]))
                out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = TOP + 14 + 18 * idx
        out.append(f'<line x1="{LEFT + pw + 8}" y1="{ly}" x2="{LEFT + pw + 28}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{LEFT + pw + 32}" y="{ly + 4}" font-family="sans-serif" font-size="11">'
                   f'{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


__all__ = ["Chart", "Series", "render"]
