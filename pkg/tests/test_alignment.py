import math

from hypothesis import given
from hypothesis import strategies as st

from layoutfix.alignment import (
    AlignmentRelation,
    aligned,
    collapse_kinds,
    extract_alignments,
    raw_alignment_kinds,
)
from layoutfix.core import BBox, Element, Layout

from conftest import layouts

TAN18 = math.tan(math.radians(18))  # 0.32492


def test_exact_equality_always_aligned():
    assert aligned(0.3, 0.3, 0.0, 18)
    assert aligned(0.3, 0.3, 0.5, 18)


def test_offset_outside_cone_rejected():
    # offset 0.1 at gap 0.1: threshold tan(18)*0.1 = 0.0325 < 0.1
    assert TAN18 * 0.1 < 0.1
    assert not aligned(0.4, 0.5, 0.1, 18)


def test_offset_inside_cone_accepted():
    # offset 0.03 at gap 0.1 is within 0.0325
    assert aligned(0.40, 0.43, 0.1, 18)


def test_gap_guard_for_overlapping_extents():
    # zero gap uses the 1e-3 guard: only near-exact offsets pass
    assert aligned(0.5, 0.5 + 1e-4, 0.0, 18)
    assert not aligned(0.5, 0.51, 0.0, 18)


def _pair_layout(box_a, box_b):
    return Layout(600, 800, (
        Element("a", "text", box_a),
        Element("b", "text", box_b),
    ))


def test_stacked_boxes_share_left_edge():
    layout = _pair_layout(
        BBox(0.3, 0.2, 0.2, 0.1),
        BBox(0.35, 0.4, 0.3, 0.1),  # same left edge 0.2, stacked with gap
    )
    kinds = {r.kind for r in extract_alignments(layout, 18)}
    assert "left" in kinds
    assert "right" not in kinds and "left-right" not in kinds


def test_identical_side_by_side_collapse():
    layout = _pair_layout(
        BBox(0.3, 0.5, 0.2, 0.2),
        BBox(0.7, 0.5, 0.2, 0.2),
    )
    kinds = {r.kind for r in extract_alignments(layout, 18)}
    assert kinds == {"top-bottom", "hmid"}


def test_single_element_no_relations():
    layout = Layout(600, 800, (Element("a", "text", BBox(0.5, 0.5, 0.4, 0.4)),))
    assert extract_alignments(layout, 18) == frozenset()


def test_relations_keyed_by_id_order():
    layout = _pair_layout(BBox(0.3, 0.2, 0.2, 0.1), BBox(0.3, 0.5, 0.2, 0.1))
    for rel in extract_alignments(layout, 18):
        assert rel.i < rel.j


def test_collapse_rule():
    assert collapse_kinds({"left", "right"}) == {"left-right"}
    assert collapse_kinds({"left", "right", "vmid"}) == {"left-right", "vmid"}
    assert collapse_kinds({"top", "bottom", "hmid"}) == {"top-bottom", "hmid"}
    assert collapse_kinds({"left"}) == {"left"}


@given(layouts(min_elements=2, max_elements=5))
def test_extraction_symmetric_under_reorder(layout):
    reordered = Layout(
        layout.canvas_width, layout.canvas_height, tuple(reversed(layout.elements))
    )
    assert extract_alignments(layout, 18) == extract_alignments(reordered, 18)


@given(layouts(min_elements=2, max_elements=5),
       st.floats(5, 40), st.floats(5, 40))
def test_raw_kinds_monotone_in_angle(layout, angle_a, angle_b):
    lo, hi = sorted((angle_a, angle_b))
    for p in range(len(layout.elements)):
        for q in range(p + 1, len(layout.elements)):
            a, b = layout.elements[p].box, layout.elements[q].box
            assert raw_alignment_kinds(a, b, lo) <= raw_alignment_kinds(a, b, hi)


@given(layouts(min_elements=2, max_elements=4))
def test_exactly_aligned_edges_always_detected(layout):
    # force two elements to share a left edge, far apart vertically
    a = layout.elements[0].box
    moved = BBox(a.left + 0.1 / 2, min(a.y + 0.5, 0.9), 0.1, 0.05)
    elements = list(layout.elements)
    elements[1] = Element(elements[1].id, elements[1].category, moved)
    layout = Layout(600, 800, tuple(elements))
    ids = sorted([elements[0].id, elements[1].id])
    rels = extract_alignments(layout, 18)
    pair_kinds = {r.kind for r in rels if (r.i, r.j) == tuple(ids)}
    assert pair_kinds & {"left", "left-right"}
