"""Layout quality metrics: alignment, overlap, containment, occlusion,
similarity.

Lower is better for align/ove/occ; higher is better for cont/similarity.
Align and Ove follow the conventions of prior layout-generation evaluation
code, so values are comparable within this package, not across papers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CriteriaSet, Layout
from .energy import _min_edge_distance, element_arrays, ioca
from .grid import layout_similarity
from .saliency import SaliencyMap, load_saliency

__all__ = [
    "MetricBundle",
    "metric_align",
    "metric_overlap",
    "metric_containment",
    "metric_occlusion",
    "metric_similarity",
    "compute_metrics",
    "SaliencyMap",
    "load_saliency",
]

_LOG_CLAMP = 1e-6


@dataclass(frozen=True)
class MetricBundle:
    """Metric values for one layout; fields are None when not applicable."""

    align: float
    ove: float
    cont: float | None = None
    occ: float | None = None
    similarity: float | None = None

    def as_dict(self) -> dict[str, float]:
        out = {"align": self.align, "ove": self.ove}
        if self.cont is not None:
            out["cont"] = self.cont
        if self.occ is not None:
            out["occ"] = self.occ
        if self.similarity is not None:
            out["similarity"] = self.similarity
        return out


def metric_align(layout: Layout) -> float:
    """Mean -log(1 - d) over elements, d being the distance from the
    element's best edge (of left/center/right/top/middle/bottom) to the
    nearest matching edge of any other element. Zero when every element is
    exactly edge-aligned with some neighbor; zero for single-element
    layouts."""
    n = len(layout.elements)
    if n < 2:
        return 0.0
    x, y, w, h = element_arrays(layout)
    d = np.clip(_min_edge_distance(x, y, w, h), 0.0, 1.0 - _LOG_CLAMP)
    return float(-np.log(1.0 - d).mean()) + 0.0


def metric_overlap(layout: Layout, criteria: CriteriaSet) -> float:
    """Mean over elements of overlapped-area ratios against all others.

    Pairs where exactly one category is a parent are sanctioned containment
    and do not count.
    """
    n = len(layout.elements)
    if n < 2:
        return 0.0
    total = 0.0
    for i, a in enumerate(layout.elements):
        for j, b in enumerate(layout.elements):
            if i == j:
                continue
            a_parent = a.category in criteria.parent
            b_parent = b.category in criteria.parent
            if a_parent != b_parent:
                continue
            ow = min(a.box.right, b.box.right) - max(a.box.left, b.box.left)
            oh = min(a.box.bottom, b.box.bottom) - max(a.box.top, b.box.top)
            if ow > 0 and oh > 0:
                total += ow * oh / a.box.area
    return total / n


def metric_containment(layout: Layout, criteria: CriteriaSet) -> float | None:
    """Mean over child-category elements of their best coverage by a parent.

    None when the layout has no child-category elements (or the criteria
    define none); a child with no parent present scores 0.
    """
    if not criteria.child:
        return None
    children = [e for e in layout.elements if e.category in criteria.child]
    if not children:
        return None
    parents = [e for e in layout.elements if e.category in criteria.parent]
    total = 0.0
    for c in children:
        total += max((ioca(c.box, p.box) for p in parents), default=0.0)
    return total / len(children)


def metric_occlusion(layout: Layout, saliency: SaliencyMap) -> float:
    """Mean saliency over the union of all element footprints.

    Double-covered pixels count once; an empty union scores 0.
    """
    mask = np.zeros((saliency.height, saliency.width), dtype=bool)
    for e in layout.elements:
        mask |= saliency.box_mask(e.box.left, e.box.top, e.box.right, e.box.bottom)
    count = int(mask.sum())
    if count == 0:
        return 0.0
    return float(saliency.values[mask].sum() / count)


def metric_similarity(a: Layout, b: Layout) -> float:
    return layout_similarity(a, b)


def compute_metrics(
    layout: Layout,
    criteria: CriteriaSet,
    saliency: SaliencyMap | None = None,
    reference: Layout | None = None,
) -> MetricBundle:
    return MetricBundle(
        align=metric_align(layout),
        ove=metric_overlap(layout, criteria),
        cont=metric_containment(layout, criteria),
        occ=metric_occlusion(layout, saliency) if saliency is not None else None,
        similarity=metric_similarity(layout, reference) if reference is not None else None,
    )
