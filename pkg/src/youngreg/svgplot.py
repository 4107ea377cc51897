"""Minimal native SVG line/scatter plots. CSV files are the data contract;
these plots are conveniences and carry no external dependencies."""

from __future__ import annotations

import math
from typing import IO, Sequence

_W, _H = 640, 440
_ML, _MR, _MT, _MB = 70, 20, 30, 50
_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s for s in (1, 2, 5, 10) if s * mag >= raw), default=10) * mag
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-12 * step:
        out.append(round(t, 12))
        t += step
    return out


def _fmt(v: float) -> str:
    return f"{v:.4g}"


class LinePlot:
    """Collect (x, y) series and render one SVG chart; log axes transform the data."""

    def __init__(self, title: str = "", xlabel: str = "", ylabel: str = "",
                 logx: bool = False, logy: bool = False):
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.logx, self.logy = logx, logy
        self.series: list[tuple[str, list[float], list[float], bool]] = []

    def add(self, label: str, xs: Sequence[float], ys: Sequence[float],
            scatter: bool = False) -> None:
        pts = [(x, y) for x, y in zip(xs, ys)
               if (not self.logx or x > 0) and (not self.logy or y > 0)]
        if not pts:
            return
        tx = [math.log10(x) if self.logx else x for x, _ in pts]
        ty = [math.log10(y) if self.logy else y for _, y in pts]
        self.series.append((label, tx, ty, scatter))

    def write(self, fh: IO[str]) -> None:
        xs = [x for _, sx, _, _ in self.series for x in sx]
        ys = [y for _, _, sy, _ in self.series for y in sy]
        if not xs:
            xs, ys = [0.0, 1.0], [0.0, 1.0]
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
        if x1 == x0:
            x1 = x0 + 1.0
        if y1 == y0:
            y1 = y0 + 1.0
        padx, pady = 0.04 * (x1 - x0), 0.06 * (y1 - y0)
        x0, x1, y0, y1 = x0 - padx, x1 + padx, y0 - pady, y1 + pady
        pw, ph = _W - _ML - _MR, _H - _MT - _MB

        def sx(x: float) -> float:
            return _ML + (x - x0) / (x1 - x0) * pw

        def sy(y: float) -> float:
            return _MT + (1.0 - (y - y0) / (y1 - y0)) * ph

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
            f'viewBox="0 0 {_W} {_H}">',
            f'<rect width="{_W}" height="{_H}" fill="white"/>',
            f'<rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}" fill="none" '
            f'stroke="#333" stroke-width="1"/>',
        ]
        if self.title:
            out.append(f'<text x="{_W / 2}" y="18" text-anchor="middle" '
                       f'font-size="14" font-family="sans-serif">{self.title}</text>')
        for tx in _ticks(x0, x1):
            px = sx(tx)
            lab = _fmt(10**tx) if self.logx else _fmt(tx)
            out.append(f'<line x1="{px:.1f}" y1="{_MT + ph}" x2="{px:.1f}" '
                       f'y2="{_MT + ph + 4}" stroke="#333"/>')
            out.append(f'<text x="{px:.1f}" y="{_MT + ph + 18}" text-anchor="middle" '
                       f'font-size="11" font-family="sans-serif">{lab}</text>')
        for ty in _ticks(y0, y1):
            py = sy(ty)
            lab = _fmt(10**ty) if self.logy else _fmt(ty)
            out.append(f'<line x1="{_ML - 4}" y1="{py:.1f}" x2="{_ML}" y2="{py:.1f}" '
                       f'stroke="#333"/>')
            out.append(f'<text x="{_ML - 7}" y="{py + 4:.1f}" text-anchor="end" '
                       f'font-size="11" font-family="sans-serif">{lab}</text>')
        if self.xlabel:
            out.append(f'<text x="{_ML + pw / 2}" y="{_H - 12}" text-anchor="middle" '
                       f'font-size="12" font-family="sans-serif">{self.xlabel}</text>')
        if self.ylabel:
            out.append(f'<text x="16" y="{_MT + ph / 2}" text-anchor="middle" '
                       f'font-size="12" font-family="sans-serif" '
                       f'transform="rotate(-90 16 {_MT + ph / 2})">{self.ylabel}</text>')
        for k, (label, tx, ty, scatter) in enumerate(self.series):
            color = _COLORS[k % len(_COLORS)]
            if scatter:
                for x, y in zip(tx, ty):
                    out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" '
                               f'fill="{color}"/>')
            else:
                pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(tx, ty))
                out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                           f'stroke-width="1.5"/>')
            ly = _MT + 16 + 16 * k
            out.append(f'<line x1="{_ML + pw - 130}" y1="{ly - 4}" x2="{_ML + pw - 110}" '
                       f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{_ML + pw - 105}" y="{ly}" font-size="11" '
                       f'font-family="sans-serif">{label}</text>')
        out.append("</svg>")
        fh.write("\n".join(out) + "\n")
