"""Tiny dependency-free SVG line charts for sweep output."""

from __future__ import annotations

import math

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_W, _H = 640, 400
_ML, _MR, _MT, _MB = 64, 16, 32, 44  # margins


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        return [lo]
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def line_chart(series, *, title: str = "", x_label: str = "", y_label: str = "") -> str:
    """series: list of (name, xs, ys); points with a None y are skipped.

    Returns a complete standalone SVG document as a string.
    """
    pts = [(x, y) for _, xs, ys in series for x, y in zip(xs, ys) if y is not None]
    if not pts:
        raise ValueError("nothing to plot: every y value is missing")
    xs_all = [p[0] for p in pts]
    ys_all = [p[1] for p in pts]
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    inner_w = _W - _ML - _MR
    inner_h = _H - _MT - _MB

    def px(x):
        return _ML + (x - x_lo) / (x_hi - x_lo) * inner_w

    def py(y):
        return _MT + (1.0 - (y - y_lo) / (y_hi - y_lo)) * inner_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_ML}" y="{_MT}" width="{inner_w}" height="{inner_h}" '
        f'fill="none" stroke="#999"/>',
    ]
    if title:
        parts.append(f'<text x="{_W / 2:.1f}" y="20" text-anchor="middle" '
                     f'font-size="14">{title}</text>')
    for tx in _ticks(x_lo, x_hi):
        parts.append(f'<line x1="{px(tx):.1f}" y1="{_MT + inner_h}" x2="{px(tx):.1f}" '
                     f'y2="{_MT + inner_h + 4}" stroke="#333"/>')
        parts.append(f'<text x="{px(tx):.1f}" y="{_MT + inner_h + 18}" '
                     f'text-anchor="middle">{_fmt(tx)}</text>')
    for ty in _ticks(y_lo, y_hi):
        parts.append(f'<line x1="{_ML - 4}" y1="{py(ty):.1f}" x2="{_ML}" '
                     f'y2="{py(ty):.1f}" stroke="#333"/>')
        parts.append(f'<text x="{_ML - 8}" y="{py(ty) + 4:.1f}" '
                     f'text-anchor="end">{_fmt(ty)}</text>')
    if x_label:
        parts.append(f'<text x="{_ML + inner_w / 2:.1f}" y="{_H - 8}" '
                     f'text-anchor="middle">{x_label}</text>')
    if y_label:
        parts.append(f'<text x="14" y="{_MT + inner_h / 2:.1f}" text-anchor="middle" '
                     f'transform="rotate(-90 14 {_MT + inner_h / 2:.1f})">{y_label}</text>')

    legend_y = _MT + 14
    for idx, (name, xs, ys) in enumerate(series):
        color = _PALETTE[idx % len(_PALETTE)]
        run = []
        for x, y in zip(xs, ys):
            if y is None or (isinstance(y, float) and not math.isfinite(y)):
                if len(run) > 1:
                    parts.append(_polyline(run, color))
                run = []
                continue
            run.append((px(x), py(y)))
        if len(run) > 1:
            parts.append(_polyline(run, color))
        for x, y in zip(xs, ys):
            if y is not None and (not isinstance(y, float) or math.isfinite(y)):
                parts.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="2.5" '
                             f'fill="{color}"/>')
        parts.append(f'<rect x="{_ML + 10}" y="{legend_y - 9}" width="18" height="3" '
                     f'fill="{color}"/>')
        parts.append(f'<text x="{_ML + 34}" y="{legend_y}">{name}</text>')
        legend_y += 16
    parts.append("</svg>\n")
    return "\n".join(parts)


def _polyline(points, color: str) -> str:
    coords = " ".join(f"{x:.1f},{y:.1f}" for x, y in points)
    return f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>'
