"""Bare-bones SVG step charts for baseline hazards and survival curves."""

from __future__ import annotations

from html import escape
from typing import Sequence

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=60, right=170, top=30, bottom=50)
COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** int(f"{raw:e}".split("e")[1])
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    first = step * int(lo / step)
    ticks = []
    t = first
    while t <= hi + 1e-12:
        if t >= lo - 1e-12:
            ticks.append(round(t, 10))
        t += step
    return ticks


def step_chart(series: Sequence[tuple[str, Sequence[float], Sequence[float]]],
               title: str = "", xlabel: str = "minute", ylabel: str = "",
               xmax: float = 90.0, bands: Sequence[tuple[Sequence[float], Sequence[float]]] | None = None,
               ) -> str:
    """Right-continuous step lines, one per ``(label, x, y)``; optional dashed bands."""
    ymax = max((max(y) for _, _, y in series if len(y)), default=1.0)
    if bands:
        ymax = max([ymax] + [max(hi) for _, hi in bands if len(hi)])
    ymax = ymax if ymax > 0 else 1.0
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + pw * x / xmax

    def sy(y):
        return MARGIN["top"] + ph * (1 - y / ymax)

    def path(xs, ys):
        pts = []
        for i, (x, y) in enumerate(zip(xs, ys)):
            if i:
                pts.append(f"{sx(x):.2f},{sy(ys[i - 1]):.2f}")
            pts.append(f"{sx(x):.2f},{sy(y):.2f}")
        if len(xs):
            pts.append(f"{sx(xmax):.2f},{sy(ys[-1]):.2f}")
        return " ".join(pts)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    if title:
        out.append(f'<text x="{WIDTH / 2:.0f}" y="18" text-anchor="middle">{escape(title)}</text>')
    x0, y0 = MARGIN["left"], MARGIN["top"] + ph
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0 + pw}" y2="{y0}" stroke="black"/>')
    out.append(f'<line x1="{x0}" y1="{MARGIN["top"]}" x2="{x0}" y2="{y0}" stroke="black"/>')
    for t in _nice_ticks(0, xmax):
        out.append(f'<text x="{sx(t):.2f}" y="{y0 + 16}" text-anchor="middle">{t:g}</text>')
    for t in _nice_ticks(0, ymax):
        out.append(f'<text x="{x0 - 6}" y="{sy(t) + 4:.2f}" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{x0 + pw / 2:.0f}" y="{HEIGHT - 12}" text-anchor="middle">'
               f'{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="14" y="{MARGIN["top"] + ph / 2:.0f}" text-anchor="middle" '
                   f'transform="rotate(-90 14 {MARGIN["top"] + ph / 2:.0f})">{escape(ylabel)}</text>')
    for i, (label, xs, ys) in enumerate(series):
        colour = COLOURS[i % len(COLOURS)]
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" '
                   f'points="{path(list(xs), list(ys))}"/>')
        if bands:
            lo, hi = bands[i]
            for ys_b in (lo, hi):
                out.append(f'<polyline fill="none" stroke="{colour}" stroke-dasharray="4 3" '
                           f'stroke-width="0.8" points="{path(list(xs), list(ys_b))}"/>')
        ly = MARGIN["top"] + 16 * i + 8
        lx = WIDTH - MARGIN["right"] + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" stroke="{colour}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
