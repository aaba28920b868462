"""Core layout types, validation, and byte-stable JSON serialization.

Layouts are lists of categorized axis-aligned boxes on a normalized canvas.
Boxes are stored in center/size form ``[x, y, w, h]``; edges are derived on
demand. All types are immutable value objects, safe to share across threads.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

# Coordinates are canonicalized to this many decimals at ingest, which makes
# parse/serialize a byte-stable round trip.
COORD_DECIMALS = 6

# Generators routinely overshoot the canvas a little; accept up to this much
# at ingest, clamp before optimization.
INGEST_TOLERANCE = 0.05

# Minimum element width/height the optimizer will ever produce.
SIZE_FLOOR = 1e-3


class LayoutError(ValueError):
    """Invalid layout, criteria, or configuration input."""


class NumericError(RuntimeError):
    """Non-finite value encountered during optimization."""


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box: center ``(x, y)`` plus ``(w, h)``, normalized units."""

    x: float
    y: float
    w: float
    h: float

    @property
    def left(self) -> float:
        return self.x - self.w / 2

    @property
    def right(self) -> float:
        return self.x + self.w / 2

    @property
    def top(self) -> float:
        return self.y - self.h / 2

    @property
    def bottom(self) -> float:
        return self.y + self.h / 2

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class Element:
    """One layout element: opaque id, category label, and its box."""

    id: str
    category: str
    box: BBox


@dataclass(frozen=True)
class Layout:
    """An ordered collection of elements on a canvas.

    Canvas pixel dimensions are metadata only; all geometry is normalized.
    Element order is stable under serialization round trips.
    """

    canvas_width: float
    canvas_height: float
    elements: tuple[Element, ...]

    def __len__(self) -> int:
        return len(self.elements)

    def ids(self) -> list[str]:
        return [e.id for e in self.elements]

    def categories(self) -> list[str]:
        return [e.category for e in self.elements]

    def with_boxes(self, boxes: Iterable[BBox]) -> "Layout":
        """Same elements, new geometry."""
        boxes = list(boxes)
        if len(boxes) != len(self.elements):
            raise ValueError("box count does not match element count")
        elems = tuple(
            dataclasses.replace(e, box=b) for e, b in zip(self.elements, boxes)
        )
        return dataclasses.replace(self, elements=elems)


@dataclass(frozen=True)
class CriteriaSet:
    """Layout-specific rule partition over category labels.

    ``parent`` categories may be overlaid by ``child`` categories; ``others``
    may not overlap anything. The three sets are disjoint and their union is
    the category universe. ``preserve_aspect`` / ``preserve_size`` mark
    categories whose shape must survive rectification.
    """

    parent: frozenset[str] = frozenset()
    child: frozenset[str] = frozenset()
    others: frozenset[str] = frozenset()
    preserve_aspect: frozenset[str] = frozenset()
    preserve_size: frozenset[str] = frozenset()

    @property
    def universe(self) -> frozenset[str]:
        return self.parent | self.child | self.others


@dataclass(frozen=True)
class RectifyConfig:
    """Tunables for the rectification pipeline.

    Defaults follow the reference setup: aspect weight 10, size weight 100,
    5 exemplar grids, 5 outer alternation rounds, 100 Adam steps per round.
    """

    lambda_aspect: float = 10.0
    lambda_size: float = 100.0
    num_exemplars: int = 5
    outer_iters: int = 5
    adam_iters: int = 100
    adam_lr: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    gutter: float = 0.01
    align_angle_deg: float = 18.0
    snap_lines_per_side: int = 3
    rng_seed: int = 0
    # Use the alternative (printed-form) negative containment cost. Kept for
    # comparison runs; the default behavioral form is what the pipeline needs.
    eq3_literal: bool = False
    # Ablation switches: disable one optimization stage.
    enable_stage_a: bool = True
    enable_stage_b: bool = True
    # Flaw-score combination weights (equal by default).
    flaw_align: float = 1.0
    flaw_overlap: float = 1.0
    flaw_containment: float = 1.0
    flaw_occlusion: float = 1.0
    # Branch scores within this margin of the best count as tied; ties go to
    # the branch most similar to the input. Keeps numerical-noise score
    # differences from overriding the preservation goal.
    flaw_tie_tol: float = 1e-3

    def validate(self) -> "RectifyConfig":
        if self.num_exemplars < 1 or self.outer_iters < 1 or self.adam_iters < 1:
            raise LayoutError("exemplar/iteration counts must be >= 1")
        if self.snap_lines_per_side < 1:
            raise LayoutError("snap_lines_per_side must be >= 1")
        if self.lambda_aspect < 0 or self.lambda_size < 0:
            raise LayoutError("lambda weights must be >= 0")
        if not (0 < self.align_angle_deg < 90):
            raise LayoutError("align_angle_deg must lie in (0, 90)")
        if self.gutter < 0:
            raise LayoutError("gutter must be >= 0")
        if self.adam_lr <= 0 or self.adam_eps <= 0:
            raise LayoutError("adam_lr and adam_eps must be > 0")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise LayoutError("adam betas must lie in [0, 1)")
        return self

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RectifyConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise LayoutError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data).validate()

    @classmethod
    def from_json(cls, text: str | bytes) -> "RectifyConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise LayoutError(f"malformed config JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise LayoutError("config JSON must be an object")
        return cls.from_dict(data)

    def merged(self, **overrides: Any) -> "RectifyConfig":
        """New config with non-None overrides applied."""
        updates = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **updates).validate()


def _round(v: float) -> float:
    return round(float(v), COORD_DECIMALS)


def _require_number(value: Any, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise LayoutError(f"{what} must be a number, got {value!r}")
    return float(value)


def parse_layout(text: str | bytes, criteria: CriteriaSet | None = None) -> Layout:
    """Parse and validate the layout JSON format.

    Coordinates are canonicalized to 6 decimals so that serializing the
    result is byte-stable. When ``criteria`` is given, every element category
    must belong to its universe. Raises :class:`LayoutError` with the element
    id for every invariant violation; never raises anything else on bad
    input.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LayoutError(f"malformed layout JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise LayoutError("layout JSON must be an object")

    cw = _require_number(data.get("canvas_width"), "canvas_width")
    ch = _require_number(data.get("canvas_height"), "canvas_height")
    if cw <= 0 or ch <= 0:
        raise LayoutError("canvas dimensions must be positive")

    raw_elements = data.get("elements")
    if not isinstance(raw_elements, list) or len(raw_elements) == 0:
        raise LayoutError("layout must contain at least one element")

    seen: set[str] = set()
    elements: list[Element] = []
    for idx, raw in enumerate(raw_elements):
        if not isinstance(raw, dict):
            raise LayoutError(f"element #{idx} is not an object")
        eid = raw.get("id")
        if not isinstance(eid, str) or not eid:
            raise LayoutError(f"element #{idx} is missing a string id")
        if eid in seen:
            raise LayoutError(f"duplicate element id {eid!r}")
        seen.add(eid)
        category = raw.get("category")
        if not isinstance(category, str) or not category:
            raise LayoutError(f"element {eid!r} is missing a category")
        if criteria is not None and category not in criteria.universe:
            raise LayoutError(
                f"element {eid!r} has unknown category {category!r}"
            )
        rawbox = raw.get("box")
        if not isinstance(rawbox, list) or len(rawbox) != 4:
            raise LayoutError(f"element {eid!r} box must be [x, y, w, h]")
        x, y, w, h = (
            _round(_require_number(v, f"element {eid!r} box[{k}]"))
            for k, v in enumerate(rawbox)
        )
        if w <= 0 or h <= 0:
            raise LayoutError(f"element {eid!r} has non-positive size")
        box = BBox(x, y, w, h)
        lo, hi = -INGEST_TOLERANCE, 1 + INGEST_TOLERANCE
        if not (lo <= box.left and box.right <= hi and lo <= box.top and box.bottom <= hi):
            raise LayoutError(
                f"element {eid!r} lies outside the canvas tolerance"
            )
        elements.append(Element(eid, category, box))

    return Layout(cw, ch, tuple(elements))


def layout_to_dict(layout: Layout) -> dict[str, Any]:
    return {
        "canvas_width": _round(layout.canvas_width),
        "canvas_height": _round(layout.canvas_height),
        "elements": [
            {
                "id": e.id,
                "category": e.category,
                "box": [_round(v) for v in e.box.as_list()],
            }
            for e in layout.elements
        ],
    }


def serialize_layout(layout: Layout) -> str:
    """Canonical JSON text: fixed field order, 6-decimal coordinates."""
    return json.dumps(layout_to_dict(layout), separators=(",", ":"))


def layouts_equal(a: Layout, b: Layout, decimals: int = COORD_DECIMALS) -> bool:
    """Structural equality at fixed decimal precision."""
    if len(a) != len(b):
        return False
    for ea, eb in zip(a.elements, b.elements):
        if ea.id != eb.id or ea.category != eb.category:
            return False
        for va, vb in zip(ea.box.as_list(), eb.box.as_list()):
            if round(va, decimals) != round(vb, decimals):
                return False
    return True


def clamp_box(box: BBox) -> BBox:
    """Project a box into the unit canvas with the minimum-size floor."""
    w = min(max(box.w, SIZE_FLOOR), 1.0)
    h = min(max(box.h, SIZE_FLOOR), 1.0)
    x = min(max(box.x, w / 2), 1 - w / 2)
    y = min(max(box.y, h / 2), 1 - h / 2)
    return BBox(x, y, w, h)


def clamp_layout(layout: Layout) -> Layout:
    return layout.with_boxes(clamp_box(e.box) for e in layout.elements)


def _string_set(data: Mapping[str, Any], key: str) -> frozenset[str]:
    raw = data.get(key, [])
    if not isinstance(raw, list) or any(not isinstance(v, str) for v in raw):
        raise LayoutError(f"criteria field {key!r} must be a list of strings")
    return frozenset(raw)


def parse_criteria(text: str | bytes) -> CriteriaSet:
    """Parse the criteria JSON format.

    Omitted sets default to empty. Categories that appear only in the
    preservation lists are placed in ``others``. A category listed in more
    than one of parent/child/others is an error.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LayoutError(f"malformed criteria JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise LayoutError("criteria JSON must be an object")

    parent = _string_set(data, "parent")
    child = _string_set(data, "child")
    others = _string_set(data, "others")
    preserve_aspect = _string_set(data, "preserve_aspect")
    preserve_size = _string_set(data, "preserve_size")

    for a, b, name in (
        (parent, child, "parent/child"),
        (parent, others, "parent/others"),
        (child, others, "child/others"),
    ):
        dup = a & b
        if dup:
            raise LayoutError(f"categories {sorted(dup)} listed in both {name}")

    # Preservation-only categories still need a slot in the partition.
    unplaced = (preserve_aspect | preserve_size) - (parent | child | others)
    others = others | unplaced

    return CriteriaSet(parent, child, others, preserve_aspect, preserve_size)
