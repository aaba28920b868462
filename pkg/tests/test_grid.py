import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from layoutfix.core import BBox, Element, Layout, LayoutError
from layoutfix.grid import (
    build_grid_index,
    construct_grid,
    corpus_boundary,
    layout_similarity,
    load_grid_index,
    retrieve_exemplars,
    save_grid_index,
    snap_lines,
)

from conftest import layouts


def one_box_layout(x, y, w, h, category="text", eid="e0"):
    return Layout(600, 800, (Element(eid, category, BBox(x, y, w, h)),))


def test_boundary_single_box():
    assert corpus_boundary([one_box_layout(0.5, 0.5, 0.4, 0.4)]) == (0.3, 0.3, 0.7, 0.7)


def test_boundary_full_bleed_clamped():
    assert corpus_boundary([one_box_layout(0.5, 0.5, 1, 1)]) == (0, 0, 1, 1)


def test_boundary_two_layouts():
    corpus = [one_box_layout(0.3, 0.3, 0.2, 0.2), one_box_layout(0.7, 0.7, 0.2, 0.2)]
    assert corpus_boundary(corpus) == pytest.approx((0.2, 0.2, 0.8, 0.8))


def test_boundary_empty_corpus_rejected():
    with pytest.raises(LayoutError):
        corpus_boundary([])


def test_construct_grid_single_box():
    grid = construct_grid(one_box_layout(0.5, 0.5, 0.4, 0.4), (0, 0, 1, 1), 0.01)
    assert grid.col_lines == pytest.approx((0, 0.3, 0.7, 1))
    assert grid.row_lines == pytest.approx((0, 0.3, 0.7, 1))


def test_construct_grid_dedupes_shared_edges():
    layout = Layout(600, 800, (
        Element("a", "text", BBox(0.2, 0.3, 0.2, 0.2)),
        Element("b", "text", BBox(0.2, 0.7, 0.2, 0.2)),
    ))
    grid = construct_grid(layout, (0, 0, 1, 1), 0.01)
    assert grid.col_lines.count(0.1) == 1


def test_construct_grid_merges_near_lines_at_midpoint():
    layout = Layout(600, 800, (
        Element("a", "text", BBox(0.200, 0.3, 0.200, 0.2)),
        Element("b", "text", BBox(0.205, 0.7, 0.200, 0.2)),
    ))
    grid = construct_grid(layout, (0, 0, 1, 1), 0.01)
    # left edges 0.100 and 0.105 merge to their midpoint
    assert 0.1025 in [round(v, 6) for v in grid.col_lines]
    assert 0.1 not in grid.col_lines and 0.105 not in grid.col_lines


def test_merge_preserves_boundary_lines():
    layout = one_box_layout(0.5, 0.5, 0.99, 0.99)  # edges 0.005/0.995, near boundary
    grid = construct_grid(layout, (0, 0, 1, 1), 0.01)
    assert grid.col_lines[0] == 0 and grid.col_lines[-1] == 1


def test_grid_spacing_invariant():
    layout = Layout(600, 800, (
        Element("a", "text", BBox(0.3, 0.3, 0.28, 0.28)),
        Element("b", "text", BBox(0.31, 0.7, 0.28, 0.2)),
        Element("c", "text", BBox(0.306, 0.5, 0.27, 0.1)),
    ))
    gutter = 0.01
    grid = construct_grid(layout, (0, 0, 1, 1), gutter)
    for lines in (grid.col_lines, grid.row_lines):
        gaps = [b - a for a, b in zip(lines, lines[1:])]
        assert all(g > 2 * gutter for g in gaps)


def test_construct_grid_idempotent_on_grid_layout():
    layout = Layout(600, 800, (
        Element("a", "text", BBox(0.3, 0.3, 0.4, 0.4)),
        Element("b", "text", BBox(0.3, 0.75, 0.4, 0.3)),
    ))
    grid1 = construct_grid(layout, (0, 0, 1, 1), 0.01)
    grid2 = construct_grid(layout, (0, 0, 1, 1), 0.01)
    assert grid1.col_lines == grid2.col_lines
    assert grid1.row_lines == grid2.row_lines


def test_snap_lines_inset_rule():
    grid = construct_grid(one_box_layout(0.5, 0.5, 0.4, 0.4), (0, 0, 1, 1), 0.01)
    # build from explicit lines [0, 0.5, 1] instead
    import dataclasses

    grid = dataclasses.replace(grid, col_lines=(0.0, 0.5, 1.0))
    lines = snap_lines(grid)
    assert lines.vertical == pytest.approx((0, 0.01, 0.49, 0.51, 0.99, 1))


def test_snap_lines_zero_gutter_degenerates_to_lines():
    import dataclasses

    grid = construct_grid(one_box_layout(0.5, 0.5, 0.4, 0.4), (0, 0, 1, 1), 0.0)
    grid = dataclasses.replace(grid, col_lines=(0.0, 0.5, 1.0))
    assert snap_lines(grid).vertical == (0.0, 0.5, 1.0)


def test_snap_lines_boundary_only():
    import dataclasses

    grid = construct_grid(one_box_layout(0.5, 0.5, 0.4, 0.4), (0, 0, 1, 1), 0.01)
    grid = dataclasses.replace(grid, col_lines=(0.0, 1.0))
    assert snap_lines(grid).vertical == pytest.approx((0, 0.01, 0.99, 1))


@given(layouts(min_elements=1, max_elements=5), st.floats(0, 0.02))
def test_snap_values_inside_unit_canvas(layout, gutter):
    boundary = corpus_boundary([layout])
    grid = construct_grid(layout, boundary, gutter)
    lines = snap_lines(grid)
    for v in lines.vertical + lines.horizontal:
        assert -1e-9 <= v <= 1 + 1e-9


# --- similarity -----------------------------------------------------------


def test_similarity_identity():
    layout = one_box_layout(0.5, 0.5, 0.4, 0.4)
    assert layout_similarity(layout, layout) == pytest.approx(1.0)


def test_similarity_disjoint_categories():
    a = one_box_layout(0.5, 0.5, 0.4, 0.4, category="text")
    b = one_box_layout(0.5, 0.5, 0.4, 0.4, category="title")
    assert layout_similarity(a, b) == 0.0


def test_similarity_quarter_overlap():
    a = one_box_layout(0.5, 0.5, 0.4, 0.4)
    b = one_box_layout(0.5, 0.5, 0.2, 0.2)
    assert layout_similarity(a, b) == pytest.approx(0.25)


@given(layouts(max_elements=5), layouts(max_elements=5))
def test_similarity_symmetric(a, b):
    assert layout_similarity(a, b) == pytest.approx(layout_similarity(b, a))


@given(layouts(max_elements=5))
def test_self_similarity_is_one(layout):
    assert layout_similarity(layout, layout) == pytest.approx(1.0)


# --- retrieval ------------------------------------------------------------


def _index_from(layout_list):
    corpus = [(f"grid-{k:02d}", lay) for k, lay in enumerate(layout_list)]
    return build_grid_index(corpus, 0.01)


def test_retrieve_own_grid_first():
    target = Layout(600, 800, (
        Element("a", "text", BBox(0.3, 0.3, 0.3, 0.3)),
        Element("b", "title", BBox(0.7, 0.7, 0.3, 0.3)),
    ))
    other = one_box_layout(0.5, 0.5, 0.9, 0.9)
    index = _index_from([other, target])
    got = retrieve_exemplars(target, index, 1)
    assert got[0].source_id == "grid-01"


def test_retrieve_saturates_when_m_exceeds_index():
    index = _index_from([one_box_layout(0.5, 0.5, 0.4, 0.4)])
    assert len(retrieve_exemplars(one_box_layout(0.5, 0.5, 0.4, 0.4), index, 10)) == 1


def test_retrieve_tie_breaks_by_source_id():
    probe = one_box_layout(0.5, 0.5, 0.4, 0.4)
    near = one_box_layout(0.5, 0.5, 0.38, 0.38)
    tied_a = one_box_layout(0.5, 0.5, 0.2, 0.2)
    tied_b = one_box_layout(0.5, 0.5, 0.2, 0.2)
    index = _index_from([near, tied_b, tied_a])
    sims = [layout_similarity(probe, src) for _, src in index]
    assert sims[1] == sims[2] and sims[0] > sims[1]
    got = retrieve_exemplars(probe, index, 2)
    assert [g.source_id for g in got] == ["grid-00", "grid-01"]


def test_retrieve_deterministic():
    probe = one_box_layout(0.5, 0.5, 0.4, 0.4)
    index = _index_from([one_box_layout(0.5, 0.5, 0.3 + 0.05 * k, 0.3) for k in range(6)])
    first = [g.source_id for g in retrieve_exemplars(probe, index, 3)]
    second = [g.source_id for g in retrieve_exemplars(probe, index, 3)]
    assert first == second


def test_retrieve_empty_index_rejected():
    with pytest.raises(LayoutError):
        retrieve_exemplars(one_box_layout(0.5, 0.5, 0.4, 0.4), [], 3)


# --- persistence ----------------------------------------------------------


def test_grid_index_round_trip(tmp_path):
    corpus = [
        ("a", Layout(600, 800, (
            Element("x", "text", BBox(0.3, 0.3, 0.3, 0.3)),
            Element("y", "title", BBox(0.7, 0.7, 0.3, 0.3)),
        ))),
        ("b", one_box_layout(0.5, 0.5, 0.6, 0.6)),
    ]
    index = build_grid_index(corpus, 0.01)
    path = tmp_path / "grids.json"
    save_grid_index(index, path)

    doc = json.loads(path.read_text())
    assert set(doc) == {"gutter", "boundary", "grids"}
    assert doc["grids"][0]["source_id"] == "a"
    assert all(set(g) == {"source_id", "col_lines", "row_lines", "elements"}
               for g in doc["grids"])

    loaded = load_grid_index(path)
    assert [g.source_id for g, _ in loaded] == ["a", "b"]
    for (g1, src1), (g2, src2) in zip(index, loaded):
        assert g1.col_lines == pytest.approx(g2.col_lines)
        assert src1.categories() == src2.categories()
