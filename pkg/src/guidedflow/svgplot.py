"""Dependency-free multi-panel scatter SVG.

One square panel per point set, fixed data range [-8, 8]^2, a fixed-radius
circle per point and the set's name as panel title. Output is built from
formatted strings only, so identical inputs give byte-identical files.
"""

from __future__ import annotations

__all__ = ["scatter_panels_svg"]

PANEL = 300
MARGIN = 36
GAP = 24
AXIS_RANGE = (-8.0, 8.0)
POINT_RADIUS = 1.6


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def scatter_panels_svg(panels: list[tuple[str, list[tuple[float, float]]]]) -> str:
    """Render (title, points) panels left to right in input order."""
    lo, hi = AXIS_RANGE
    span = hi - lo
    width = MARGIN * 2 + PANEL * len(panels) + GAP * (len(panels) - 1)
    height = MARGIN * 2 + PANEL + 18
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for i, (title, points) in enumerate(panels):
        x0 = MARGIN + i * (PANEL + GAP)
        y0 = MARGIN
        out.append(f'<g id="panel{i}">')
        out.append(f'<rect x="{x0}" y="{y0}" width="{PANEL}" height="{PANEL}" '
                   'fill="none" stroke="black" stroke-width="1"/>')
        # zero axes
        cx = x0 + PANEL * (0.0 - lo) / span
        cy = y0 + PANEL * (hi - 0.0) / span
        out.append(f'<line x1="{_fmt(cx)}" y1="{y0}" x2="{_fmt(cx)}" '
                   f'y2="{y0 + PANEL}" stroke="#cccccc" stroke-width="0.5"/>')
        out.append(f'<line x1="{x0}" y1="{_fmt(cy)}" x2="{x0 + PANEL}" '
                   f'y2="{_fmt(cy)}" stroke="#cccccc" stroke-width="0.5"/>')
        for tick in (lo, 0.0, hi):
            tx = x0 + PANEL * (tick - lo) / span
            out.append(f'<text x="{_fmt(tx)}" y="{y0 + PANEL + 14}" '
                       'font-size="10" text-anchor="middle" '
                       f'font-family="sans-serif">{tick:g}</text>')
        out.append(f'<text x="{_fmt(x0 + PANEL / 2)}" y="{y0 - 10}" '
                   'font-size="13" text-anchor="middle" '
                   f'font-family="sans-serif">{_escape(title)}</text>')
        for px, py in points:
            if not (lo <= px <= hi and lo <= py <= hi):
                continue
            sx = x0 + PANEL * (px - lo) / span
            sy = y0 + PANEL * (hi - py) / span
            out.append(f'<circle cx="{_fmt(sx)}" cy="{_fmt(sy)}" '
                       f'r="{POINT_RADIUS}" fill="#1f6fb4" fill-opacity="0.5"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;"))
