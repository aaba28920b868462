import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from layoutfix.alignment import AlignmentRelation, extract_alignments
from layoutfix.core import BBox, CriteriaSet, Element, Layout, RectifyConfig
from layoutfix.energy import (
    build_context,
    candidate_energies,
    contain_neg,
    contain_pos,
    diou_cost,
    element_arrays,
    energy_align,
    energy_aspect,
    energy_containment,
    energy_dist,
    energy_occlusion,
    energy_overlap,
    energy_size,
    gradient,
    ioca,
    iou,
    stage_b_gradient_arrays,
    stage_b_objective_arrays,
    total_energy,
    total_energy_arrays,
    total_energy_batch,
)
from layoutfix.saliency import SaliencyMap

import oracles
from conftest import boxes, layouts

CHILD = BBox(0.55, 0.5, 0.2, 0.2)
PARENT = BBox(0.4, 0.5, 0.2, 0.2)


# --- geometry primitives ----------------------------------------------------


def test_iou_identical():
    b = BBox(0.5, 0.5, 0.4, 0.4)
    assert iou(b, b) == pytest.approx(1.0)


def test_iou_disjoint():
    assert iou(BBox(0.2, 0.2, 0.1, 0.1), BBox(0.8, 0.8, 0.1, 0.1)) == 0.0


def test_iou_third():
    a = BBox(0.5, 0.5, 0.4, 0.4)
    b = BBox(0.7, 0.5, 0.4, 0.4)
    assert iou(a, b) == pytest.approx(1 / 3)
    assert iou(a, b) == pytest.approx(oracles.iou_oracle(a, b))


def test_ioca_fixture():
    assert ioca(CHILD, PARENT) == pytest.approx(0.25)
    assert ioca(CHILD, PARENT) == pytest.approx(oracles.ioca_oracle(CHILD, PARENT))


def test_ioca_full_containment():
    assert ioca(BBox(0.5, 0.5, 0.1, 0.1), BBox(0.5, 0.5, 0.5, 0.5)) == pytest.approx(1.0)


def test_ioca_disjoint():
    assert ioca(BBox(0.2, 0.2, 0.1, 0.1), BBox(0.8, 0.8, 0.1, 0.1)) == 0.0


def test_diou_identical():
    b = BBox(0.5, 0.5, 0.4, 0.4)
    assert diou_cost(b, b) == pytest.approx(0.0)


def test_diou_fixture():
    a = BBox(0.25, 0.5, 0.1, 0.1)
    b = BBox(0.75, 0.5, 0.1, 0.1)
    assert diou_cost(a, b) == pytest.approx(1 + 0.25 / 0.37)
    assert diou_cost(a, b) == pytest.approx(oracles.diou_oracle(a, b))


def test_diou_concentric():
    inner = BBox(0.5, 0.5, 0.2, 0.2)
    outer = BBox(0.5, 0.5, 0.4, 0.4)
    assert diou_cost(inner, outer) == pytest.approx(1 - inner.area / outer.area)


def test_contain_pos_contained_is_zero():
    assert contain_pos(BBox(0.5, 0.5, 0.1, 0.1), BBox(0.55, 0.5, 0.5, 0.5)) == pytest.approx(0.0, abs=1e-12)


def test_contain_pos_disjoint_exceeds_one():
    val = contain_pos(BBox(0.2, 0.2, 0.1, 0.1), BBox(0.8, 0.8, 0.1, 0.1))
    assert val > 1.0


def test_contain_pos_fixture():
    assert contain_pos(CHILD, PARENT) == pytest.approx(0.8538461538, abs=1e-9)
    assert contain_pos(CHILD, PARENT) == pytest.approx(
        oracles.contain_pos_oracle(CHILD, PARENT)
    )


def test_contain_neg_disjoint_is_zero():
    assert contain_neg(BBox(0.2, 0.2, 0.1, 0.1), BBox(0.8, 0.8, 0.1, 0.1)) == 0.0


def test_contain_neg_identical_is_max():
    b = BBox(0.5, 0.5, 0.3, 0.3)
    assert contain_neg(b, b) == pytest.approx(1.0)


def test_contain_neg_fixture():
    assert contain_neg(CHILD, PARENT) == pytest.approx(0.2153846154, abs=1e-9)
    assert contain_neg(CHILD, PARENT) == pytest.approx(
        oracles.contain_neg_oracle(CHILD, PARENT)
    )


def test_contain_neg_literal_form():
    b = BBox(0.5, 0.5, 0.3, 0.3)
    # alternative printed form: zero at coincident full overlap, one when disjoint
    assert contain_neg(b, b, literal=True) == pytest.approx(0.0)
    assert contain_neg(
        BBox(0.2, 0.2, 0.1, 0.1), BBox(0.8, 0.8, 0.1, 0.1), literal=True
    ) == pytest.approx(1.0)


@given(boxes, boxes)
def test_iou_ioca_ranges(a, b):
    assert 0.0 <= iou(a, b) <= 1.0
    assert 0.0 <= ioca(a, b) <= 1.0


@given(boxes, boxes)
def test_contain_pos_zero_iff_contained(a, b):
    val = contain_pos(a, b)
    assert val >= -1e-12
    if oracles.contained_in(a, b):
        assert abs(val) <= 1e-9
    else:
        assert val > 1e-9 or oracles.contained_in(a, b, tol=1e-7)


@given(boxes, boxes)
def test_contain_neg_zero_iff_disjoint(a, b):
    val = contain_neg(a, b)
    if oracles.disjoint(a, b):
        assert val == 0.0
    elif oracles.rect_intersection_area(a, b) > 1e-9:
        assert val > 0.0


@given(boxes, boxes)
def test_contain_neg_bounded_by_unit_interval(a, b):
    # rho <= c, so the distance factor stays in (0, 1]
    assert -1e-12 <= contain_neg(a, b) <= 1.0 + 1e-12
    assert oracles.distance_penalty_oracle(a, b) <= 1.0 + 1e-12


@given(boxes, boxes, st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))
def test_translation_invariance(a, b, dx, dy):
    a2 = BBox(a.x + dx, a.y + dy, a.w, a.h)
    b2 = BBox(b.x + dx, b.y + dy, b.w, b.h)
    assert iou(a2, b2) == pytest.approx(iou(a, b), abs=1e-12)
    assert ioca(a2, b2) == pytest.approx(ioca(a, b), abs=1e-12)
    assert diou_cost(a2, b2) == pytest.approx(diou_cost(a, b), abs=1e-12)
    assert contain_pos(a2, b2) == pytest.approx(contain_pos(a, b), abs=1e-12)
    assert contain_neg(a2, b2) == pytest.approx(contain_neg(a, b), abs=1e-12)


def test_contain_neg_strictly_decreasing_along_separation():
    parent = BBox(0.5, 0.5, 0.3, 0.2)
    child_w, child_h = 0.1, 0.15
    t_end = (child_w + 0.3) / 2
    values = []
    for t in np.linspace(0, t_end, 100):
        values.append(contain_neg(BBox(0.5 + t, 0.5, child_w, child_h), parent))
    assert values[0] == pytest.approx(1.0)  # fully inside, coincident centers
    assert values[-1] == pytest.approx(0.0, abs=1e-12)
    assert all(b < a for a, b in zip(values, values[1:]))


# --- energy terms -----------------------------------------------------------


def _pair_layout(box_a, box_b, cats=("text", "text")):
    return Layout(600, 800, (
        Element("a", cats[0], box_a),
        Element("b", cats[1], box_b),
    ))


def test_energy_align_paired_zero_when_aligned():
    layout = _pair_layout(BBox(0.3, 0.2, 0.2, 0.1), BBox(0.4, 0.5, 0.4, 0.1))
    rel = frozenset({AlignmentRelation("a", "b", "left")})
    assert energy_align(layout, rel) == pytest.approx(0.0)


def test_energy_align_paired_absolute_offset():
    layout = _pair_layout(BBox(0.3, 0.2, 0.2, 0.1), BBox(0.42, 0.5, 0.4, 0.1))
    # left edges 0.2 vs 0.22
    rel = frozenset({AlignmentRelation("a", "b", "left")})
    assert energy_align(layout, rel) == pytest.approx(0.02)


def test_energy_align_unpaired_zero_at_exact_alignment():
    layout = _pair_layout(BBox(0.3, 0.2, 0.2, 0.1), BBox(0.3, 0.6, 0.2, 0.1))
    assert energy_align(layout, frozenset()) == pytest.approx(0.0)


def test_energy_align_left_right_counts_both_edges():
    layout = _pair_layout(BBox(0.3, 0.2, 0.2, 0.1), BBox(0.31, 0.5, 0.21, 0.1))
    rel = frozenset({AlignmentRelation("a", "b", "left-right")})
    # |dL| + |dR| = 0.005 + 0.015
    assert energy_align(layout, rel) == pytest.approx(0.02)


def test_energy_overlap_disjoint_document(document_criteria):
    layout = _pair_layout(BBox(0.2, 0.2, 0.1, 0.1), BBox(0.8, 0.8, 0.1, 0.1))
    assert energy_overlap(layout, document_criteria) == 0.0


def test_energy_overlap_parent_child_waived(magazine_criteria):
    layout = _pair_layout(
        BBox(0.5, 0.5, 0.4, 0.4), BBox(0.5, 0.5, 0.2, 0.1),
        cats=("image", "text-over-image"),
    )
    assert energy_overlap(layout, magazine_criteria) == 0.0


def test_energy_overlap_identical_pair_counts_both_orders(document_criteria):
    b = BBox(0.5, 0.5, 0.3, 0.3)
    layout = _pair_layout(b, b)
    assert energy_overlap(layout, document_criteria) == pytest.approx(2.0)


def test_energy_overlap_parent_parent_penalized(magazine_criteria):
    b = BBox(0.5, 0.5, 0.3, 0.3)
    layout = _pair_layout(b, b, cats=("image", "image"))
    assert energy_overlap(layout, magazine_criteria) == pytest.approx(2.0)


def test_energy_containment_contained_is_zero(magazine_criteria):
    layout = _pair_layout(
        BBox(0.5, 0.5, 0.1, 0.1), BBox(0.5, 0.5, 0.5, 0.5),
        cats=("text-over-image", "image"),
    )
    assert energy_containment(layout, magazine_criteria) == pytest.approx(0.0, abs=1e-12)


def test_energy_containment_document_is_zero(document_criteria):
    layout = _pair_layout(BBox(0.5, 0.5, 0.3, 0.3), BBox(0.5, 0.5, 0.3, 0.3))
    assert energy_containment(layout, document_criteria) == 0.0


def test_energy_containment_magazine_fixture(magazine_criteria):
    layout = _pair_layout(CHILD, PARENT, cats=("text-over-image", "image"))
    assert energy_containment(layout, magazine_criteria) == pytest.approx(
        2 * 0.8538461538, abs=1e-6
    )


def test_energy_containment_parent_others_not_forced(magazine_criteria):
    # plain text next to an image is not pulled inside it
    layout = _pair_layout(
        BBox(0.3, 0.5, 0.2, 0.2), BBox(0.7, 0.5, 0.2, 0.2), cats=("text", "image")
    )
    assert energy_containment(layout, magazine_criteria) == 0.0


def _aspect_fixture(cat):
    original = Layout(600, 800, (Element("a", cat, BBox(0.5, 0.5, 0.4, 0.2)),))
    resized = original.with_boxes([BBox(0.5, 0.5, 0.4, 0.4)])
    return original, resized


def test_energy_aspect_examples():
    crit = CriteriaSet(others=frozenset({"figure"}), preserve_aspect=frozenset({"figure"}))
    original, resized = _aspect_fixture("figure")
    assert energy_aspect(original, original, crit) == 0.0
    assert energy_aspect(resized, original, crit) == pytest.approx(1.0)
    off = CriteriaSet(others=frozenset({"figure"}))
    assert energy_aspect(resized, original, off) == 0.0


def test_energy_size_examples():
    crit = CriteriaSet(others=frozenset({"figure"}), preserve_size=frozenset({"figure"}))
    original = Layout(600, 800, (Element("a", "figure", BBox(0.5, 0.5, 0.4, 0.2)),))
    wider = original.with_boxes([BBox(0.5, 0.5, 0.5, 0.2)])
    assert energy_size(original, original, crit) == 0.0
    assert energy_size(wider, original, crit) == pytest.approx(0.01)
    off = CriteriaSet(others=frozenset({"figure"}))
    assert energy_size(wider, original, off) == 0.0


def test_energy_dist_examples():
    original = _pair_layout(BBox(0.3, 0.3, 0.1, 0.1), BBox(0.7, 0.7, 0.1, 0.1))
    assert energy_dist(original, original) == 0.0
    moved_one = original.with_boxes([BBox(0.4, 0.3, 0.1, 0.1), BBox(0.7, 0.7, 0.1, 0.1)])
    assert energy_dist(moved_one, original) == pytest.approx(0.01)
    moved_two = original.with_boxes([BBox(0.4, 0.3, 0.1, 0.1), BBox(0.8, 0.7, 0.1, 0.1)])
    assert energy_dist(moved_two, original) == pytest.approx(0.02)


def test_energy_occlusion_examples():
    layout = Layout(600, 800, (Element("a", "text", BBox(0.25, 0.5, 0.5, 1.0)),))
    zero = SaliencyMap(8, 8, np.zeros((8, 8)))
    assert energy_occlusion(layout, zero) == 0.0
    ones = SaliencyMap(8, 8, np.ones((8, 8)))
    assert energy_occlusion(layout, ones) == pytest.approx(1.0)
    half = np.zeros((8, 8))
    half[:, :4] = 1.0
    halfmap = SaliencyMap(8, 8, half)
    assert energy_occlusion(layout, halfmap) == pytest.approx(1.0)  # bright half
    dark = Layout(600, 800, (Element("a", "text", BBox(0.75, 0.5, 0.5, 1.0)),))
    assert energy_occlusion(dark, halfmap) == pytest.approx(0.0)


def test_total_energy_composition(magazine_criteria):
    layout = _pair_layout(CHILD, PARENT, cats=("text-over-image", "image"))
    relations = extract_alignments(layout, 18)
    cfg = RectifyConfig()
    breakdown = total_energy(layout, layout, relations, magazine_criteria, cfg)
    assert breakdown.align == pytest.approx(energy_align(layout, relations))
    assert breakdown.ove == pytest.approx(energy_overlap(layout, magazine_criteria))
    assert breakdown.cont == pytest.approx(energy_containment(layout, magazine_criteria))
    assert breakdown.dist == 0.0 and breakdown.aspect == 0.0 and breakdown.size == 0.0
    assert breakdown.total == pytest.approx(
        breakdown.align + breakdown.dist + breakdown.ove + breakdown.cont
        + cfg.lambda_aspect * breakdown.aspect + cfg.lambda_size * breakdown.size
        + breakdown.occ
    )


def test_total_energy_flaw_free_is_unpaired_residual_only(document_criteria):
    layout = _pair_layout(BBox(0.3, 0.2, 0.2, 0.1), BBox(0.32, 0.6, 0.2, 0.1))
    breakdown = total_energy(layout, layout, frozenset(), document_criteria, RectifyConfig())
    assert breakdown.ove == 0.0 and breakdown.cont == 0.0 and breakdown.dist == 0.0
    assert breakdown.total == pytest.approx(breakdown.align)
    assert breakdown.align > 0


def test_total_energy_lambda_size_scaling():
    crit = CriteriaSet(others=frozenset({"figure"}), preserve_size=frozenset({"figure"}))
    original = Layout(600, 800, (Element("a", "figure", BBox(0.5, 0.5, 0.4, 0.2)),))
    wider = original.with_boxes([BBox(0.5, 0.5, 0.5, 0.2)])
    on = total_energy(wider, original, frozenset(), crit, RectifyConfig())
    off = total_energy(wider, original, frozenset(), crit, RectifyConfig(lambda_size=0))
    assert on.size == off.size == pytest.approx(0.01)
    assert on.total - off.total == pytest.approx(100 * 0.01)


@given(layouts(min_elements=2, max_elements=5))
def test_breakdown_components_nonnegative(layout):
    crit = CriteriaSet(others=frozenset(set(layout.categories())))
    relations = extract_alignments(layout, 18)
    b = total_energy(layout, layout, relations, crit, RectifyConfig())
    for value in (b.align, b.dist, b.ove, b.cont, b.aspect, b.size, b.occ):
        assert value >= -1e-12


# --- gradients --------------------------------------------------------------


def test_gradient_zero_for_disjoint_document_pair(document_criteria):
    layout = _pair_layout(BBox(0.2, 0.2, 0.1, 0.1), BBox(0.8, 0.8, 0.1, 0.1))
    g = gradient(layout, layout, frozenset(), document_criteria, RectifyConfig())
    assert not g.any()


def test_gradient_pushes_identical_pair_apart(document_criteria):
    b = BBox(0.5, 0.5, 0.3, 0.3)
    layout = _pair_layout(b, b)
    g = gradient(layout, layout, frozenset(), document_criteria, RectifyConfig())
    # descent moves the first box up-left, the second down-right
    assert g[0, 0] > 0 and g[1, 0] < 0
    assert g[0, 1] > 0 and g[1, 1] < 0


def test_gradient_aspect_at_target_is_zero():
    crit = CriteriaSet(others=frozenset({"figure"}), preserve_aspect=frozenset({"figure"}))
    layout = Layout(600, 800, (Element("a", "figure", BBox(0.5, 0.5, 0.4, 0.2)),))
    g = gradient(layout, layout, frozenset(), crit, RectifyConfig())
    assert g[0, 2] == pytest.approx(0.0) and g[0, 3] == pytest.approx(0.0)


def test_gradient_matches_fd_on_fixture(mixed_criteria):
    layout = Layout(600, 800, (
        Element("a", "text", BBox(0.4, 0.42, 0.25, 0.2)),
        Element("b", "image", BBox(0.55, 0.5, 0.3, 0.28)),
        Element("c", "caption", BBox(0.72, 0.66, 0.12, 0.1)),
    ))
    original = layout.with_boxes([
        BBox(0.38, 0.44, 0.27, 0.19),
        BBox(0.57, 0.48, 0.28, 0.3),
        BBox(0.7, 0.68, 0.13, 0.09),
    ])
    cfg = RectifyConfig()
    ctx = build_context(layout, original, frozenset(), mixed_criteria, cfg)
    x, y, w, h = element_arrays(layout)
    g = stage_b_gradient_arrays(x, y, w, h, ctx)

    def objective(flat):
        p = flat.reshape(-1, 4)
        return stage_b_objective_arrays(p[:, 0], p[:, 1], p[:, 2], p[:, 3], ctx)

    fd = oracles.central_fd(objective, np.stack([x, y, w, h], axis=1).ravel()).reshape(-1, 4)
    assert np.abs(g - fd).max() <= 1e-3 * max(1.0, np.abs(fd).max())


def test_gradient_sign_matches_fd_for_overlap(document_criteria):
    b = BBox(0.5, 0.5, 0.3, 0.3)
    layout = _pair_layout(BBox(0.45, 0.5, 0.3, 0.3), b)
    cfg = RectifyConfig()
    ctx = build_context(layout, layout, frozenset(), document_criteria, cfg)
    x, y, w, h = element_arrays(layout)
    g = stage_b_gradient_arrays(x, y, w, h, ctx)

    def objective(flat):
        p = flat.reshape(-1, 4)
        return stage_b_objective_arrays(p[:, 0], p[:, 1], p[:, 2], p[:, 3], ctx)

    fd = oracles.central_fd(objective, np.stack([x, y, w, h], axis=1).ravel()).reshape(-1, 4)
    assert np.sign(g[np.abs(fd) > 1e-6]) == pytest.approx(np.sign(fd[np.abs(fd) > 1e-6]))


def test_gradient_finite_on_small_boxes(document_criteria):
    layout = _pair_layout(BBox(0.5, 0.5, 0.001, 0.001), BBox(0.5, 0.5, 0.001, 0.001))
    g = gradient(layout, layout, frozenset(), document_criteria, RectifyConfig())
    assert np.isfinite(g).all()


# --- batch and delta evaluation consistency ---------------------------------


@given(layouts(min_elements=2, max_elements=5), st.integers(0, 10**6))
def test_candidate_energies_match_batch(layout, seed):
    rng = np.random.default_rng(seed)
    crit = CriteriaSet(
        parent=frozenset({"image"}),
        child=frozenset({"caption"}),
        others=frozenset({"text", "title", "figure"}),
        preserve_aspect=frozenset({"image"}),
        preserve_size=frozenset({"text"}),
    )
    relations = extract_alignments(layout, 18)
    ctx = build_context(layout, layout, relations, crit, RectifyConfig())
    x, y, w, h = element_arrays(layout)
    e = int(rng.integers(0, len(layout.elements)))
    c = 5
    cand = np.stack([
        x[e] + rng.uniform(-0.2, 0.2, c),
        y[e] + rng.uniform(-0.2, 0.2, c),
        np.maximum(w[e] * rng.uniform(0.7, 1.3, c), 1e-3),
        np.maximum(h[e] * rng.uniform(0.7, 1.3, c), 1e-3),
    ], axis=1)
    fast = candidate_energies(x, y, w, h, e, cand, ctx)
    xs = np.tile(x, (c, 1)); ys = np.tile(y, (c, 1))
    ws = np.tile(w, (c, 1)); hs = np.tile(h, (c, 1))
    xs[:, e], ys[:, e], ws[:, e], hs[:, e] = cand.T
    slow = total_energy_batch(xs, ys, ws, hs, ctx)
    ref = np.array([
        total_energy_arrays(xs[r], ys[r], ws[r], hs[r], ctx).total for r in range(c)
    ])
    np.testing.assert_allclose(fast, ref, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(slow, ref, rtol=1e-10, atol=1e-10)
