"""Dependency-free SVG line plots."""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 400
MARGIN = 60


def _scale(values: Sequence[float], lo_px: float, hi_px: float):
    lo, hi = min(values), max(values)
    span = hi - lo if hi > lo else 1.0
    return lambda v: lo_px + (v - lo) / span * (hi_px - lo_px)


def line_plot_svg(xs: Sequence[float], ys: Sequence[float], *, title: str = "", xlabel: str = "",
                  ylabel: str = "", marker_x: float | None = None) -> str:
    """Render one polyline; ``marker_x`` draws a vertical red guide at that x."""
    if len(xs) != len(ys) or not xs:
        raise ValueError("xs and ys must be non-empty and of equal length")
    sx = _scale(list(xs) + ([marker_x] if marker_x is not None else []), MARGIN, WIDTH - MARGIN / 2)
    sy = _scale(ys, HEIGHT - MARGIN, MARGIN / 2)
    pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN / 2}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN / 2}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{pts}"/>',
        f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 15}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="15" y="{HEIGHT / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 15 {HEIGHT / 2})">{escape(ylabel)}</text>',
        f'<text x="{MARGIN}" y="{HEIGHT - MARGIN + 15}" font-size="10">{min(xs):.4g}</text>',
        f'<text x="{WIDTH - MARGIN / 2}" y="{HEIGHT - MARGIN + 15}" text-anchor="end" font-size="10">{max(xs):.4g}</text>',
        f'<text x="{MARGIN - 4}" y="{HEIGHT - MARGIN}" text-anchor="end" font-size="10">{min(ys):.4g}</text>',
        f'<text x="{MARGIN - 4}" y="{MARGIN / 2 + 4}" text-anchor="end" font-size="10">{max(ys):.4g}</text>',
    ]
    if marker_x is not None:
        mx = sx(marker_x)
        parts.append(f'<line x1="{mx:.2f}" y1="{MARGIN / 2}" x2="{mx:.2f}" y2="{HEIGHT - MARGIN}" '
                     'stroke="crimson" stroke-dasharray="4 3"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
