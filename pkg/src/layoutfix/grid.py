"""Grid systems: construction from corpus layouts, persistence, retrieval.

A grid system is the scaffold a designer would have used for a layout:
margins from the corpus-global extent, column/row lines from one layout's
element edges, and a gutter that insets legal snap positions from each line.
Near-duplicate lines (closer than twice the gutter) merge to their midpoint,
which recovers the original center line between two gutter-separated edges.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .core import BBox, Element, Layout, LayoutError
from .energy import iou

# Snap positions closer than this collapse into one.
LINE_EPS = 1e-6


@dataclass(frozen=True)
class GridSystem:
    margin_left: float
    margin_top: float
    margin_right: float
    margin_bottom: float
    col_lines: tuple[float, ...]
    row_lines: tuple[float, ...]
    gutter: float
    source_id: str


@dataclass(frozen=True)
class SnapLineSet:
    """Legal x/y positions for element edges, derived from a grid."""

    vertical: tuple[float, ...]
    horizontal: tuple[float, ...]


def corpus_boundary(corpus: list[Layout]) -> tuple[float, float, float, float]:
    """Global extent of all element boxes: (left, top, right, bottom).

    Clamped to the unit canvas; the corpus must be non-empty.
    """
    if not corpus:
        raise LayoutError("corpus must contain at least one layout")
    left = top = float("inf")
    right = bottom = float("-inf")
    for layout in corpus:
        for e in layout.elements:
            left = min(left, e.box.left)
            top = min(top, e.box.top)
            right = max(right, e.box.right)
            bottom = max(bottom, e.box.bottom)
    clamp = lambda v: min(max(v, 0.0), 1.0)
    return clamp(left), clamp(top), clamp(right), clamp(bottom)


def _merge_lines(values: list[float], lo: float, hi: float, tol: float) -> tuple[float, ...]:
    """Sorted unique lines with near-duplicates merged to cluster midpoints.

    The boundary values ``lo``/``hi`` always survive verbatim: clusters that
    contain a boundary collapse onto it instead of the midpoint. Repeats
    until all adjacent spacings exceed ``tol``.
    """
    lines = sorted({lo, hi} | {min(max(v, lo), hi) for v in values})
    # float-noise slack so edges exactly one double-gutter apart still merge
    tol = tol + LINE_EPS
    while True:
        merged: list[float] = []
        i = 0
        changed = False
        while i < len(lines):
            j = i
            while j + 1 < len(lines) and lines[j + 1] - lines[j] <= tol:
                j += 1
            if j > i:
                changed = True
                cluster = lines[i : j + 1]
                if lo in cluster:
                    merged.append(lo)
                elif hi in cluster:
                    merged.append(hi)
                else:
                    merged.append((cluster[0] + cluster[-1]) / 2)
            else:
                merged.append(lines[i])
            i = j + 1
        lines = sorted(set(merged))
        if not changed:
            break
    if lines[0] != lo:
        lines.insert(0, lo)
    if lines[-1] != hi:
        lines.append(hi)
    return tuple(lines)


def construct_grid(
    layout: Layout,
    boundary: tuple[float, float, float, float],
    gutter: float,
    source_id: str = "",
) -> GridSystem:
    """Estimate the grid system that best describes one layout.

    Column lines come from the element left/right edges plus the global
    boundary; row lines from top/bottom edges. Lines within ``2 * gutter``
    of each other merge (two edges separated by a double gutter recover the
    designer's shared center line).
    """
    if gutter < 0:
        raise LayoutError("gutter must be >= 0")
    left, top, right, bottom = boundary
    xs = [v for e in layout.elements for v in (e.box.left, e.box.right)]
    ys = [v for e in layout.elements for v in (e.box.top, e.box.bottom)]
    tol = 2 * gutter if gutter > 0 else LINE_EPS
    return GridSystem(
        margin_left=left,
        margin_top=top,
        margin_right=right,
        margin_bottom=bottom,
        col_lines=_merge_lines(xs, left, right, tol),
        row_lines=_merge_lines(ys, top, bottom, tol),
        gutter=gutter,
        source_id=source_id,
    )


def _inset_lines(lines: tuple[float, ...], gutter: float) -> tuple[float, ...]:
    out: list[float] = []
    last = len(lines) - 1
    for k, line in enumerate(lines):
        if k == 0:
            out += [line, line + gutter]
        elif k == last:
            out += [line - gutter, line]
        else:
            out += [line - gutter, line + gutter]
    out.sort()
    dedup: list[float] = []
    for v in out:
        if not dedup or v - dedup[-1] > LINE_EPS:
            dedup.append(v)
    return tuple(dedup)


def snap_lines(grid: GridSystem) -> SnapLineSet:
    """Legal edge positions: each interior line expands to its two
    gutter-inset values; boundary lines contribute themselves plus the
    inward inset."""
    return SnapLineSet(
        vertical=_inset_lines(grid.col_lines, grid.gutter),
        horizontal=_inset_lines(grid.row_lines, grid.gutter),
    )


def _iou_matrix(a: Layout, b: Layout) -> "np.ndarray":
    """IoU of every (a_i, b_j) element pair; non-matching categories get -1."""
    import numpy as np

    from .energy import element_arrays

    ax, ay, aw, ah = element_arrays(a)
    bx, by, bw, bh = element_arrays(b)
    la, ra, ta, ba = ax - aw / 2, ax + aw / 2, ay - ah / 2, ay + ah / 2
    lb, rb, tb, bb = bx - bw / 2, bx + bw / 2, by - bh / 2, by + bh / 2
    ow = np.minimum(ra[:, None], rb) - np.maximum(la[:, None], lb)
    oh = np.minimum(ba[:, None], bb) - np.maximum(ta[:, None], tb)
    inter = np.maximum(ow, 0.0) * np.maximum(oh, 0.0)
    union = (aw * ah)[:, None] + bw * bh - inter
    matrix = inter / union
    cats_a = a.categories()
    cats_b = b.categories()
    same = np.array([[ca == cb for cb in cats_b] for ca in cats_a])
    matrix[~same] = -1.0
    return matrix


def _greedy_direction(a: Layout, b: Layout, matrix) -> float:
    """Sum of matched IoUs, matching a's elements (big first) into b."""
    order = sorted(
        range(len(a.elements)),
        key=lambda i: (-a.elements[i].box.area, i),
    )
    used = [False] * len(b.elements)
    total = 0.0
    for i in order:
        best_iou, best_j = 0.0, -1
        row = matrix[i]
        for j in range(len(b.elements)):
            if used[j]:
                continue
            v = row[j]
            if v > best_iou:
                best_iou, best_j = v, j
        if best_j >= 0:
            used[best_j] = True
            total += float(best_iou)
    return total


def layout_similarity(a: Layout, b: Layout) -> float:
    """Symmetric IoU similarity in [0, 1].

    Greedy category-constrained matching, largest elements first; the score
    is the matched-IoU sum over max(N_a, N_b), averaged over both matching
    directions. Identical layouts score 1, category-disjoint layouts 0.
    """
    denom = max(len(a.elements), len(b.elements))
    matrix = _iou_matrix(a, b)
    forward = _greedy_direction(a, b, matrix) / denom
    backward = _greedy_direction(b, a, matrix.T) / denom
    return (forward + backward) / 2


def retrieve_exemplars(
    input_layout: Layout,
    grid_index: list[tuple[GridSystem, Layout]],
    m: int,
) -> list[GridSystem]:
    """The m grids whose source layouts are most similar to the input.

    Ties break by source id so retrieval is deterministic.
    """
    if not grid_index:
        raise LayoutError("grid index is empty")
    scored = sorted(
        ((-layout_similarity(input_layout, src), grid.source_id, grid)
         for grid, src in grid_index),
        key=lambda t: (t[0], t[1]),
    )
    return [grid for _, _, grid in scored[:m]]


# ---------------------------------------------------------------------------
# grid index persistence
# ---------------------------------------------------------------------------


def build_grid_index(
    corpus: list[tuple[str, Layout]], gutter: float
) -> list[tuple[GridSystem, Layout]]:
    """One grid per corpus layout, all sharing the corpus-global boundary."""
    boundary = corpus_boundary([layout for _, layout in corpus])
    return [
        (construct_grid(layout, boundary, gutter, source_id=sid), layout)
        for sid, layout in corpus
    ]


def save_grid_index(index: list[tuple[GridSystem, Layout]], path: str | Path) -> None:
    if not index:
        raise LayoutError("cannot save an empty grid index")
    first = index[0][0]
    boundary = [first.margin_left, first.margin_top, first.margin_right, first.margin_bottom]
    doc = {
        "gutter": first.gutter,
        "boundary": boundary,
        "grids": [
            {
                "source_id": grid.source_id,
                "col_lines": list(grid.col_lines),
                "row_lines": list(grid.row_lines),
                "elements": [
                    {"category": e.category, "box": e.box.as_list()}
                    for e in src.elements
                ],
            }
            for grid, src in index
        ],
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n")


def load_grid_index(path: str | Path) -> list[tuple[GridSystem, Layout]]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise LayoutError(f"malformed grid index JSON: {exc}") from exc
    try:
        gutter = float(doc["gutter"])
        left, top, right, bottom = (float(v) for v in doc["boundary"])
        index: list[tuple[GridSystem, Layout]] = []
        for g in doc["grids"]:
            grid = GridSystem(
                margin_left=left,
                margin_top=top,
                margin_right=right,
                margin_bottom=bottom,
                col_lines=tuple(float(v) for v in g["col_lines"]),
                row_lines=tuple(float(v) for v in g["row_lines"]),
                gutter=gutter,
                source_id=str(g["source_id"]),
            )
            elements = tuple(
                Element(str(k), e["category"], BBox(*(float(v) for v in e["box"])))
                for k, e in enumerate(g["elements"])
            )
            index.append((grid, Layout(1.0, 1.0, elements)))
    except (KeyError, TypeError, ValueError) as exc:
        raise LayoutError(f"invalid grid index structure: {exc}") from exc
    if not index:
        raise LayoutError("grid index contains no grids")
    return index
