"""Synthetic grid-generated layouts for experiments and fixtures.

Layouts are built the way a designer would: a column/row grid between fixed
margins, elements spanning whole cell ranges, every edge inset from its grid
line by the gutter. Perturbation helpers add edge jitter and inject one
overlap, mimicking typical generator flaws.
"""

from __future__ import annotations

import numpy as np

from .core import BBox, Element, Layout

CATEGORIES = ("title", "text", "figure", "table", "list")
MARGIN = 0.08


def make_grid_layout(
    seed: int,
    n_elements: int | None = None,
    gutter: float = 0.01,
    n_cols: int | None = None,
    n_rows: int | None = None,
) -> Layout:
    """One on-grid layout; deterministic in the seed."""
    rng = np.random.default_rng(seed)
    cols = n_cols or int(rng.integers(2, 5))
    rows = n_rows or int(rng.integers(3, 6))
    col_pos = [MARGIN + k * (1 - 2 * MARGIN) / cols for k in range(cols + 1)]
    row_pos = [MARGIN + k * (1 - 2 * MARGIN) / rows for k in range(rows + 1)]

    elements: list[Element] = []
    for r in range(rows):
        c = 0
        while c < cols:
            span = int(rng.integers(1, cols - c + 1))
            if rng.random() < 0.15 and len(elements) > 0:
                c += span  # leave a blank cell run
                continue
            left = col_pos[c] + gutter
            right = col_pos[c + span] - gutter
            top = row_pos[r] + gutter
            bottom = row_pos[r + 1] - gutter
            category = CATEGORIES[len(elements) % len(CATEGORIES)]
            elements.append(
                Element(
                    f"e{len(elements)}",
                    category,
                    BBox((left + right) / 2, (top + bottom) / 2, right - left, bottom - top),
                )
            )
            c += span
            if n_elements is not None and len(elements) >= n_elements:
                break
        if n_elements is not None and len(elements) >= n_elements:
            break

    # top up with extra rows if a target count was requested but not reached
    while n_elements is not None and len(elements) < n_elements:
        return make_grid_layout(
            seed + 1000, n_elements, gutter, n_cols=max(cols, 3), n_rows=rows + 1
        )

    return Layout(600.0, 800.0, tuple(elements))


def make_corpus(
    n_layouts: int, seed: int = 0, gutter: float = 0.01, **kwargs
) -> list[tuple[str, Layout]]:
    return [
        (f"corpus-{k:03d}", make_grid_layout(seed + k * 17, gutter=gutter, **kwargs))
        for k in range(n_layouts)
    ]


def jitter_layout(layout: Layout, seed: int, amount: float = 0.01) -> Layout:
    """Independently jitter every box edge by up to ``amount``.

    Magnitudes are drawn from [0.4 * amount, amount] with random sign, so a
    jittered layout is reliably misaligned rather than accidentally clean.
    """
    rng = np.random.default_rng(seed)
    boxes = []
    for e in layout.elements:
        mags = rng.uniform(0.4 * amount, amount, size=4)
        signs = rng.choice((-1.0, 1.0), size=4)
        dl, dr, dt, db = mags * signs
        left, right = e.box.left + dl, e.box.right + dr
        top, bottom = e.box.top + dt, e.box.bottom + db
        boxes.append(
            BBox((left + right) / 2, (top + bottom) / 2, right - left, bottom - top)
        )
    return layout.with_boxes(boxes)


def inject_overlap(layout: Layout, seed: int, penetration: float = 0.5) -> Layout:
    """Slide one element onto its nearest neighbor to create an overlap."""
    if len(layout.elements) < 2:
        return layout
    rng = np.random.default_rng(seed)
    idx = int(rng.integers(0, len(layout.elements)))
    a = layout.elements[idx].box
    best_j, best_d = -1, float("inf")
    for j, e in enumerate(layout.elements):
        if j == idx:
            continue
        d = (e.box.x - a.x) ** 2 + (e.box.y - a.y) ** 2
        if d < best_d:
            best_d, best_j = d, j
    b = layout.elements[best_j].box

    # move along the dominant separation axis until boxes interpenetrate
    dx, dy = b.x - a.x, b.y - a.y
    boxes = [e.box for e in layout.elements]
    if abs(dx) >= abs(dy):
        target_gap = -penetration * min(a.w, b.w)
        gap = abs(dx) - (a.w + b.w) / 2
        shift = (gap - target_gap) * (1 if dx > 0 else -1)
        boxes[idx] = BBox(a.x + shift, a.y, a.w, a.h)
    else:
        target_gap = -penetration * min(a.h, b.h)
        gap = abs(dy) - (a.h + b.h) / 2
        shift = (gap - target_gap) * (1 if dy > 0 else -1)
        boxes[idx] = BBox(a.x, a.y + shift, a.w, a.h)
    return layout.with_boxes(boxes)


def perturb_layout(layout: Layout, seed: int, jitter: float = 0.01, overlap: bool = True) -> Layout:
    out = jitter_layout(layout, seed, jitter)
    if overlap:
        out = inject_overlap(out, seed + 1)
    return out
