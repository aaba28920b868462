"""Deterministic SVG rendering of layouts for before/after figures.

Boxes are drawn in layout order (paint order), colored per category by a
stable hash, with optional grid-line overlays and alignment-relation
markers. Output is plain SVG text, byte-identical for identical inputs.
"""

from __future__ import annotations

import colorsys
import hashlib
from dataclasses import dataclass, field

from .core import Layout, LayoutError
from .grid import GridSystem


@dataclass(frozen=True)
class RenderStyle:
    width_px: int = 600
    height_px: int = 600
    stroke_width: float = 2.0
    parent_fill_opacity: float = 0.35
    fill_opacity: float = 0.6
    show_labels: bool = True


def category_color(category: str) -> str:
    """Stable category color: hash to a hue, fixed saturation/lightness."""
    digest = hashlib.md5(category.encode("utf-8")).hexdigest()
    hue = int(digest[:6], 16) / 0xFFFFFF
    r, g, b = colorsys.hls_to_rgb(hue, 0.55, 0.65)
    return "#{:02x}{:02x}{:02x}".format(int(r * 255), int(g * 255), int(b * 255))


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _rects(layout: Layout, style: RenderStyle, ox: float = 0.0) -> list[str]:
    parts = []
    for e in layout.elements:
        b = e.box
        parts.append(
            f'<rect x="{_fmt(ox + b.left * style.width_px)}" '
            f'y="{_fmt(b.top * style.height_px)}" '
            f'width="{_fmt(b.w * style.width_px)}" '
            f'height="{_fmt(b.h * style.height_px)}" '
            f'fill="{category_color(e.category)}" '
            f'fill-opacity="{style.fill_opacity}" '
            f'stroke="#333333" stroke-width="{style.stroke_width}"/>'
        )
        if style.show_labels:
            parts.append(
                f'<text x="{_fmt(ox + b.left * style.width_px + 3)}" '
                f'y="{_fmt(b.top * style.height_px + 12)}" '
                f'font-size="10" font-family="monospace" fill="#111111">'
                f"{e.id}</text>"
            )
    return parts


def _grid_lines(grid: GridSystem, style: RenderStyle) -> list[str]:
    parts = []
    for x in grid.col_lines:
        parts.append(
            f'<line x1="{_fmt(x * style.width_px)}" y1="0" '
            f'x2="{_fmt(x * style.width_px)}" y2="{style.height_px}" '
            f'stroke="#88aaff" stroke-width="1" stroke-dasharray="4 3"/>'
        )
    for y in grid.row_lines:
        parts.append(
            f'<line x1="0" y1="{_fmt(y * style.height_px)}" '
            f'x2="{style.width_px}" y2="{_fmt(y * style.height_px)}" '
            f'stroke="#88aaff" stroke-width="1" stroke-dasharray="4 3"/>'
        )
    return parts


def _relation_markers(layout: Layout, relations, style: RenderStyle) -> list[str]:
    centers = {e.id: (e.box.x, e.box.y) for e in layout.elements}
    parts = []
    for rel in sorted(relations):
        (x1, y1), (x2, y2) = centers[rel.i], centers[rel.j]
        parts.append(
            f'<line x1="{_fmt(x1 * style.width_px)}" y1="{_fmt(y1 * style.height_px)}" '
            f'x2="{_fmt(x2 * style.width_px)}" y2="{_fmt(y2 * style.height_px)}" '
            f'stroke="#cc4444" stroke-width="1" stroke-dasharray="2 2">'
            f"<title>{rel.kind}</title></line>"
        )
    return parts


def render_svg(
    layout: Layout,
    style: RenderStyle | None = None,
    grid: GridSystem | None = None,
    relations=None,
) -> str:
    style = style or RenderStyle()
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'width="{style.width_px}" height="{style.height_px}" '
        f'viewBox="0 0 {style.width_px} {style.height_px}">',
        f'<rect x="0" y="0" width="{style.width_px}" height="{style.height_px}" '
        f'fill="#ffffff" stroke="#000000" stroke-width="1"/>',
    ]
    if grid is not None:
        parts += _grid_lines(grid, style)
    parts += _rects(layout, style)
    if relations:
        parts += _relation_markers(layout, relations, style)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_diff(before: Layout, after: Layout, style: RenderStyle | None = None) -> str:
    """Side-by-side panels with movement arrows between matched element ids."""
    style = style or RenderStyle()
    if set(before.ids()) != set(after.ids()):
        raise LayoutError("before/after layouts have mismatched element ids")

    gap = 20
    total_w = style.width_px * 2 + gap
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'width="{total_w}" height="{style.height_px}" '
        f'viewBox="0 0 {total_w} {style.height_px}">',
        f'<rect x="0" y="0" width="{style.width_px}" height="{style.height_px}" '
        f'fill="#ffffff" stroke="#000000" stroke-width="1"/>',
        f'<rect x="{style.width_px + gap}" y="0" width="{style.width_px}" '
        f'height="{style.height_px}" fill="#ffffff" stroke="#000000" stroke-width="1"/>',
    ]
    parts += _rects(before, style)
    parts += _rects(after, style, ox=style.width_px + gap)

    after_by_id = {e.id: e for e in after.elements}
    for e in before.elements:
        a = after_by_id[e.id]
        x1 = style.width_px + gap + e.box.x * style.width_px
        y1 = e.box.y * style.height_px
        x2 = style.width_px + gap + a.box.x * style.width_px
        y2 = a.box.y * style.height_px
        parts.append(
            f'<line class="move-arrow" x1="{_fmt(x1)}" y1="{_fmt(y1)}" '
            f'x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
            f'stroke="#222222" stroke-width="1.5" marker-end="url(#arrowhead)"/>'
        )
    parts.insert(
        1,
        '<defs><marker id="arrowhead" markerWidth="6" markerHeight="6" '
        'refX="5" refY="3" orient="auto">'
        '<path d="M0,0 L6,3 L0,6 Z" fill="#222222"/></marker></defs>',
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
