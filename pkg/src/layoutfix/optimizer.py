"""Two-stage rectification: discrete search-and-snap plus continuous Adam.

Stage A visits elements largest-first and snaps each to the grid position
that minimizes the total layout energy, holding everything else fixed.
Stage B runs Adam on all box parameters against the overlap + containment +
preservation objective. The two stages alternate for a fixed number of
rounds, once per retrieved exemplar grid; the candidate with the fewest
remaining flaws wins.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .alignment import AlignmentRelation, extract_alignments
from .core import (
    SIZE_FLOOR,
    BBox,
    CriteriaSet,
    Element,
    Layout,
    LayoutError,
    NumericError,
    RectifyConfig,
    clamp_layout,
)
from .energy import (
    EnergyContext,
    build_context,
    candidate_energies,
    element_arrays,
    stage_b_gradient_arrays,
    total_energy_arrays,
)
from .grid import GridSystem, SnapLineSet, layout_similarity, retrieve_exemplars, snap_lines
from .metrics import (
    MetricBundle,
    compute_metrics,
    metric_align,
    metric_containment,
    metric_occlusion,
    metric_overlap,
)
from .saliency import SaliencyMap

_H_KINDS = ("snap-left", "snap-right", "snap-center-h", "snap-both-h")
_V_KINDS = ("snap-top", "snap-bottom", "snap-center-v", "snap-both-v")


@dataclass(frozen=True)
class SnapCandidate:
    """One snapping option for one element; identity is always included."""

    element_index: int
    new_box: BBox
    move_kind: str


@dataclass
class AdamState:
    """Adam accumulator over an arbitrary-shape parameter array."""

    lr: float
    beta1: float
    beta2: float
    eps: float
    step_count: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None

    def step(self, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.step_count += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1 - self.beta2) * grads**2
        m_hat = self.m / (1 - self.beta1**self.step_count)
        v_hat = self.v / (1 - self.beta2**self.step_count)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass(frozen=True)
class RectifyResult:
    layout: Layout
    exemplar_source: str
    flaw_score: float
    metrics_before: MetricBundle
    metrics_after: MetricBundle
    trace: tuple[dict, ...] | None = None


def _nearest(lines: tuple[float, ...], target: float, k: int) -> list[float]:
    return sorted(lines, key=lambda v: (abs(v - target), v))[:k]


def _displacement(a: BBox, b: BBox) -> float:
    return (
        abs(a.left - b.left)
        + abs(a.right - b.right)
        + abs(a.top - b.top)
        + abs(a.bottom - b.bottom)
    )


def enumerate_candidates(
    elem: Element, lines: SnapLineSet, k: int, allow_resize: bool = True
) -> list[SnapCandidate]:
    """Snap options for one element against a snap-line set.

    Per axis: translate an edge or the center onto each of the k nearest
    lines, or resize to span a near pair of lines (k best such pairs by edge
    displacement). Duplicate geometry is removed; candidates that would
    leave the unit canvas are dropped. The identity candidate always comes
    first.

    ``allow_resize=False`` drops the snap-both (resize) kinds; the search
    uses it for size-preserved elements, whose resizes the continuous stage
    would revert anyway, leaving edges stranded off-grid.
    """
    box = elem.box
    cands: list[SnapCandidate] = [SnapCandidate(-1, box, "identity")]

    def emit(kind: str, x=None, y=None, w=None, h=None):
        nb = BBox(
            box.x if x is None else x,
            box.y if y is None else y,
            box.w if w is None else w,
            box.h if h is None else h,
        )
        cands.append(SnapCandidate(-1, nb, kind))

    near_l = _nearest(lines.vertical, box.left, k)
    near_r = _nearest(lines.vertical, box.right, k)
    for line in near_l:
        emit("snap-left", x=line + box.w / 2)
    for line in near_r:
        emit("snap-right", x=line - box.w / 2)
    for line in _nearest(lines.vertical, box.x, k):
        emit("snap-center-h", x=line)
    if allow_resize:
        both_h = [
            (abs(ll - box.left) + abs(lr - box.right), ll, lr)
            for ll in near_l
            for lr in near_r
            if lr - ll >= SIZE_FLOOR
        ]
        for _, ll, lr in sorted(both_h)[:k]:
            emit("snap-both-h", x=(ll + lr) / 2, w=lr - ll)

    near_t = _nearest(lines.horizontal, box.top, k)
    near_b = _nearest(lines.horizontal, box.bottom, k)
    for line in near_t:
        emit("snap-top", y=line + box.h / 2)
    for line in near_b:
        emit("snap-bottom", y=line - box.h / 2)
    for line in _nearest(lines.horizontal, box.y, k):
        emit("snap-center-v", y=line)
    if allow_resize:
        both_v = [
            (abs(lt - box.top) + abs(lb - box.bottom), lt, lb)
            for lt in near_t
            for lb in near_b
            if lb - lt >= SIZE_FLOOR
        ]
        for _, lt, lb in sorted(both_v)[:k]:
            emit("snap-both-v", y=(lt + lb) / 2, h=lb - lt)

    eps = 1e-9
    keys = np.round(
        np.array([c.new_box.as_list() for c in cands]), 12
    )
    seen: set[bytes] = set()
    out: list[SnapCandidate] = []
    for c, key_row in zip(cands, keys):
        nb = c.new_box
        if c.move_kind != "identity" and (
            nb.left < -eps or nb.right > 1 + eps or nb.top < -eps or nb.bottom > 1 + eps
        ):
            continue
        key = key_row.tobytes()
        if key in seen:
            continue
        seen.add(key)
        out.append(c)
    return out


def stage_a(
    layout: Layout,
    original: Layout,
    relations: frozenset[AlignmentRelation],
    criteria: CriteriaSet,
    grid: GridSystem,
    config: RectifyConfig,
    saliency: SaliencyMap | None = None,
) -> Layout:
    """One search-and-snap pass: greedy per-element argmin of total energy.

    Elements are visited in descending area order; each commit becomes the
    context for the next element. Energy ties resolve toward the smaller
    displacement, then the earlier-constructed candidate (identity first).
    """
    ctx = build_context(layout, original, relations, criteria, config, saliency)
    lines = snap_lines(grid)
    x, y, w, h = element_arrays(layout)
    order = sorted(range(ctx.n), key=lambda i: (-w[i] * h[i], i))

    # current partner edges are snap targets too (object-edge snapping);
    # without them, clusters jittered to one side of a line deadlock because
    # the first mover always pays the paired alignment cost
    index_of = {e.id: k for k, e in enumerate(layout.elements)}
    partners: dict[int, list[tuple[int, str]]] = {i: [] for i in range(ctx.n)}
    for rel in relations:
        a, b = index_of[rel.i], index_of[rel.j]
        partners[a].append((b, rel.kind))
        partners[b].append((a, rel.kind))

    elements = list(layout.elements)
    for e_idx in order:
        current = Element(
            elements[e_idx].id,
            elements[e_idx].category,
            BBox(x[e_idx], y[e_idx], w[e_idx], h[e_idx]),
        )
        vert = set(lines.vertical)
        horiz = set(lines.horizontal)
        for p_idx, kind in sorted(partners[e_idx], key=lambda t: t[0]):
            if kind in ("left", "left-right"):
                vert.add(x[p_idx] - w[p_idx] / 2)
            if kind in ("right", "left-right"):
                vert.add(x[p_idx] + w[p_idx] / 2)
            if kind == "vmid":
                vert.add(x[p_idx])
            if kind in ("top", "top-bottom"):
                horiz.add(y[p_idx] - h[p_idx] / 2)
            if kind in ("bottom", "top-bottom"):
                horiz.add(y[p_idx] + h[p_idx] / 2)
            if kind == "hmid":
                horiz.add(y[p_idx])
        targets = SnapLineSet(tuple(sorted(vert)), tuple(sorted(horiz)))
        candidates = enumerate_candidates(
            current,
            targets,
            config.snap_lines_per_side,
            allow_resize=current.category not in criteria.preserve_size,
        )
        cand = np.array([c.new_box.as_list() for c in candidates])
        energies = candidate_energies(x, y, w, h, e_idx, cand, ctx)
        best = min(
            range(len(candidates)),
            key=lambda r: (
                energies[r],
                _displacement(candidates[r].new_box, current.box),
                r,
            ),
        )
        nb = candidates[best].new_box
        x[e_idx], y[e_idx], w[e_idx], h[e_idx] = nb.x, nb.y, nb.w, nb.h

    return layout.with_boxes(BBox(*map(float, t)) for t in zip(x, y, w, h))


def _project_sizes(w: np.ndarray, h: np.ndarray) -> None:
    np.maximum(w, SIZE_FLOOR, out=w)
    np.maximum(h, SIZE_FLOOR, out=h)


def stage_b(
    layout: Layout,
    original: Layout,
    criteria: CriteriaSet,
    config: RectifyConfig,
    on_step: Callable[[int, np.ndarray, np.ndarray, np.ndarray, np.ndarray], None] | None = None,
) -> Layout:
    """Continuous refinement: Adam over all box parameters.

    Minimizes overlap + containment + aspect/size preservation. Box sizes
    are floored during the loop to keep areas positive; the full canvas
    projection happens after the last step.
    """
    ctx = build_context(layout, original, frozenset(), criteria, config)
    x, y, w, h = element_arrays(layout)
    params = np.stack([x, y, w, h], axis=1)
    adam = AdamState(config.adam_lr, config.adam_beta1, config.adam_beta2, config.adam_eps)

    for it in range(config.adam_iters):
        grads = stage_b_gradient_arrays(params[:, 0], params[:, 1], params[:, 2], params[:, 3], ctx)
        if not np.isfinite(grads).all():
            bad = int(np.argwhere(~np.isfinite(grads))[0][0])
            raise NumericError(
                f"non-finite gradient for element {layout.elements[bad].id!r} "
                f"at continuous step {it}"
            )
        if not grads.any():
            # flat region: all contacts cleared and preservation at rest;
            # running on would only let residual momentum coast boxes into
            # fresh collisions
            break
        params = adam.step(params, grads)
        _project_sizes(params[:, 2], params[:, 3])
        if on_step is not None:
            on_step(it, params[:, 0], params[:, 1], params[:, 2], params[:, 3])

    return clamp_layout(layout.with_boxes(BBox(*map(float, row)) for row in params))


def flaw_score(
    layout: Layout,
    criteria: CriteriaSet,
    saliency: SaliencyMap | None = None,
    config: RectifyConfig | None = None,
) -> float:
    """Scalar flaw count used to pick among exemplar branches; lower wins."""
    cfg = config or RectifyConfig()
    score = cfg.flaw_align * metric_align(layout)
    score += cfg.flaw_overlap * metric_overlap(layout, criteria)
    cont = metric_containment(layout, criteria)
    if cont is not None:
        score += cfg.flaw_containment * (1.0 - cont)
    if saliency is not None:
        score += cfg.flaw_occlusion * metric_occlusion(layout, saliency)
    return score


def _run_branch(
    start: Layout,
    original: Layout,
    relations: frozenset[AlignmentRelation],
    criteria: CriteriaSet,
    grid: GridSystem,
    config: RectifyConfig,
    saliency: SaliencyMap | None,
    collect_trace: bool,
) -> tuple[Layout, tuple[dict, ...] | None]:
    trace: list[dict] = []
    layout = start

    def log(stage: str, outer: int, lay: Layout, it: int | None = None):
        ctx = build_context(lay, original, relations, criteria, config, saliency)
        x, y, w, h = element_arrays(lay)
        entry = {"outer": outer, "stage": stage}
        if it is not None:
            entry["iter"] = it
        entry.update(total_energy_arrays(x, y, w, h, ctx).as_dict())
        trace.append(entry)

    for outer in range(config.outer_iters):
        if config.enable_stage_a:
            layout = stage_a(layout, original, relations, criteria, grid, config, saliency)
            if collect_trace:
                log("A", outer, layout)
        if config.enable_stage_b:
            if collect_trace:
                sink: list[Layout] = []

                def on_step(it, x, y, w, h, _outer=outer):
                    lay = layout.with_boxes(
                        BBox(float(a), float(b), float(c), float(d))
                        for a, b, c, d in zip(x, y, w, h)
                    )
                    log("B", _outer, lay, it)

                layout = stage_b(layout, original, criteria, config, on_step=on_step)
            else:
                layout = stage_b(layout, original, criteria, config)

    layout = clamp_layout(layout)
    return layout, tuple(trace) if collect_trace else None


def rectify_all(
    input_layout: Layout,
    criteria: CriteriaSet,
    grid_index: list[tuple[GridSystem, Layout]],
    config: RectifyConfig,
    saliency: SaliencyMap | None = None,
    collect_trace: bool = False,
) -> list[RectifyResult]:
    """Run every retrieved exemplar branch; results keep retrieval order."""
    if not grid_index:
        raise LayoutError("grid index is empty")
    config.validate()
    if not config.enable_stage_a and not config.enable_stage_b:
        raise LayoutError("at least one optimization stage must be enabled")

    start = clamp_layout(input_layout)
    relations = extract_alignments(start, config.align_angle_deg)
    before = compute_metrics(start, criteria, saliency)
    exemplars = retrieve_exemplars(start, grid_index, config.num_exemplars)

    results: list[RectifyResult] = []
    for grid in exemplars:
        layout, trace = _run_branch(
            start, start, relations, criteria, grid, config, saliency, collect_trace
        )
        results.append(
            RectifyResult(
                layout=layout,
                exemplar_source=grid.source_id,
                flaw_score=flaw_score(layout, criteria, saliency, config),
                metrics_before=before,
                metrics_after=compute_metrics(layout, criteria, saliency, reference=start),
                trace=trace,
            )
        )
    return results


def select_best(
    results: list[RectifyResult], input_layout: Layout, config: RectifyConfig
) -> RectifyResult:
    """Fewest-flaws branch selection.

    Branches whose flaw score sits within ``flaw_tie_tol`` of the best count
    as tied; ties break toward the output most similar to the input, then by
    flaw score, then by exemplar id.
    """
    start = clamp_layout(input_layout)
    best_score = min(r.flaw_score for r in results)
    tied = [r for r in results if r.flaw_score <= best_score + config.flaw_tie_tol]
    return min(
        tied,
        key=lambda r: (
            -layout_similarity(r.layout, start),
            r.flaw_score,
            r.exemplar_source,
        ),
    )


def rectify(
    input_layout: Layout,
    criteria: CriteriaSet,
    grid_index: list[tuple[GridSystem, Layout]],
    config: RectifyConfig | None = None,
    saliency: SaliencyMap | None = None,
    collect_trace: bool = False,
) -> RectifyResult:
    """Full repair loop: retrieve exemplar grids, optimize per grid, keep the
    branch with the fewest flaws (see :func:`select_best`).

    The pipeline is deterministic; identical inputs give byte-identical
    serialized output.
    """
    cfg = config or RectifyConfig()
    results = rectify_all(input_layout, criteria, grid_index, cfg, saliency, collect_trace)
    return select_best(results, input_layout, cfg)
