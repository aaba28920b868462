"""Extraction of perceptual pairwise alignment relations.

Two boxes count as aligned on an edge when the line connecting the matching
edge coordinates deviates from the axis by less than a threshold angle
(default 18 degrees, a perceptual-grouping limit for seeing separate
segments as one contour). Relations are extracted once from the input layout
and stay fixed during optimization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import BBox, Layout

# Boxes whose extents overlap along the probing axis get this gap stand-in,
# which makes the test an (almost) exact-equality check.
GAP_GUARD = 1e-3

VERTICAL_KINDS = ("left", "right", "vmid")
HORIZONTAL_KINDS = ("top", "bottom", "hmid")
ALL_KINDS = VERTICAL_KINDS + ("left-right",) + HORIZONTAL_KINDS + ("top-bottom",)


@dataclass(frozen=True, order=True)
class AlignmentRelation:
    """One pairwise relation; ``i < j`` by id so each pair is stored once."""

    i: str
    j: str
    kind: str


def aligned(edge_a: float, edge_b: float, perp_gap: float, angle_deg: float) -> bool:
    """True when two edge coordinates are within the continuity cone.

    The offset between the edges must not exceed ``tan(angle) * gap``, where
    ``gap`` is the box separation along the alignment axis (floored at a
    small guard so touching or overlapping boxes require near-exact
    equality).
    """
    threshold = math.tan(math.radians(angle_deg)) * max(perp_gap, GAP_GUARD)
    return abs(edge_a - edge_b) <= threshold


def _gaps(a: BBox, b: BBox) -> tuple[float, float]:
    """(vertical gap, horizontal gap) between two boxes, 0 when extents meet."""
    vgap = max(0.0, max(a.top, b.top) - min(a.bottom, b.bottom))
    hgap = max(0.0, max(a.left, b.left) - min(a.right, b.right))
    return vgap, hgap


def raw_alignment_kinds(a: BBox, b: BBox, angle_deg: float) -> set[str]:
    """All six single-edge kinds that hold for a pair, before collapsing."""
    vgap, hgap = _gaps(a, b)
    kinds: set[str] = set()
    if aligned(a.left, b.left, vgap, angle_deg):
        kinds.add("left")
    if aligned(a.right, b.right, vgap, angle_deg):
        kinds.add("right")
    if aligned(a.x, b.x, vgap, angle_deg):
        kinds.add("vmid")
    if aligned(a.top, b.top, hgap, angle_deg):
        kinds.add("top")
    if aligned(a.bottom, b.bottom, hgap, angle_deg):
        kinds.add("bottom")
    if aligned(a.y, b.y, hgap, angle_deg):
        kinds.add("hmid")
    return kinds


def collapse_kinds(kinds: set[str]) -> set[str]:
    """Merge left+right into left-right (top+bottom likewise).

    The merged kind represents one geometric constraint on both edges;
    keeping the individual relations too would double-count it in the
    alignment energy. Mid alignments are kept alongside.
    """
    out = set(kinds)
    if "left" in out and "right" in out:
        out -= {"left", "right"}
        out.add("left-right")
    if "top" in out and "bottom" in out:
        out -= {"top", "bottom"}
        out.add("top-bottom")
    return out


def extract_alignments(layout: Layout, angle_deg: float = 18.0) -> frozenset[AlignmentRelation]:
    """Pairwise relations over all element pairs of a layout.

    Symmetric in element order: pairs are keyed by id, with the smaller id
    first. One-element layouts produce the empty set.
    """
    relations: set[AlignmentRelation] = set()
    elems = layout.elements
    for p in range(len(elems)):
        for r in range(p + 1, len(elems)):
            a, b = elems[p], elems[r]
            if a.id > b.id:
                a, b = b, a
            for kind in collapse_kinds(raw_alignment_kinds(a.box, b.box, angle_deg)):
                relations.add(AlignmentRelation(a.id, b.id, kind))
    return frozenset(relations)


def relations_to_json(relations) -> list[dict[str, str]]:
    return [
        {"i": r.i, "j": r.j, "kind": r.kind}
        for r in sorted(relations)
    ]
