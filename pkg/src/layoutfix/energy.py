"""Box-pair cost functions, layout energy terms, and their gradients.

Geometry primitives (IoU, intersection-over-child-area, distance-penalized
IoU) and the two containment costs drive both optimization stages:

* ``contain_pos(child, parent)`` falls to zero exactly when the child box is
  inside the parent and keeps a useful gradient even when the boxes are
  disjoint (a distance penalty normalized by the enclosing-box diagonal).
* ``contain_neg(a, b)`` is zero exactly when the boxes are disjoint, maximal
  when they coincide, and decreases monotonically as they separate, so
  descending it pushes overlapping boxes apart.

The total layout energy combines alignment, displacement, overlap,
containment, aspect/size preservation, and (content-aware only) occlusion
terms. The continuous stage minimizes the overlap + containment +
preservation subset; its gradient is computed analytically here and checked
against central finite differences in the test suite.

Everything operates on broadcastable numpy arrays internally; thin wrappers
expose the per-box / per-layout API.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .alignment import AlignmentRelation
from .core import BBox, CriteriaSet, Layout, NumericError, RectifyConfig
from .saliency import SaliencyMap

# Floor for the -log(1 - d) alignment loss argument.
LOG_CLAMP = 1e-6

# Slot order for pair partial derivatives.
_PARAMS = ("xa", "ya", "wa", "ha", "xb", "yb", "wb", "hb")

# Edge-channel codes shared by alignment relations and the unpaired loss.
EDGE_LEFT, EDGE_CX, EDGE_RIGHT, EDGE_TOP, EDGE_CY, EDGE_BOTTOM = range(6)

_KIND_CHANNELS = {
    "left": (EDGE_LEFT,),
    "right": (EDGE_RIGHT,),
    "vmid": (EDGE_CX,),
    "left-right": (EDGE_LEFT, EDGE_RIGHT),
    "top": (EDGE_TOP,),
    "bottom": (EDGE_BOTTOM,),
    "hmid": (EDGE_CY,),
    "top-bottom": (EDGE_TOP, EDGE_BOTTOM),
}


def element_arrays(layout: Layout) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Layout geometry as (x, y, w, h) float64 arrays."""
    n = len(layout.elements)
    x = np.empty(n)
    y = np.empty(n)
    w = np.empty(n)
    h = np.empty(n)
    for i, e in enumerate(layout.elements):
        x[i], y[i], w[i], h[i] = e.box.x, e.box.y, e.box.w, e.box.h
    return x, y, w, h


def _edge_channels(x, y, w, h) -> np.ndarray:
    """Stack of the six alignment channels: L, Cx, R, T, Cy, B."""
    return np.stack([x - w / 2, x, x + w / 2, y - h / 2, y, y + h / 2])


# ---------------------------------------------------------------------------
# pair geometry (values)
# ---------------------------------------------------------------------------


def _pair_values(ax, ay, aw, ah, bx, by, bw, bh):
    """Shared geometry of box pairs; all inputs broadcast together.

    Returns (inter, area_a, area_b, ioca, rho2, c2, q) where ``ioca`` is the
    intersection over the area of box *a*, ``rho2`` the squared center
    distance, ``c2`` the squared diagonal of the smallest box enclosing both,
    and ``q = rho2 / c2``.
    """
    la, ra = ax - aw / 2, ax + aw / 2
    ta, ba = ay - ah / 2, ay + ah / 2
    lb, rb = bx - bw / 2, bx + bw / 2
    tb, bb = by - bh / 2, by + bh / 2

    ow = np.minimum(ra, rb) - np.maximum(la, lb)
    oh = np.minimum(ba, bb) - np.maximum(ta, tb)
    inter = np.maximum(ow, 0.0) * np.maximum(oh, 0.0)

    area_a = aw * ah
    area_b = bw * bh
    ioca = inter / area_a

    rho2 = (ax - bx) ** 2 + (ay - by) ** 2
    exw = np.maximum(ra, rb) - np.minimum(la, lb)
    exh = np.maximum(ba, bb) - np.minimum(ta, tb)
    c2 = exw**2 + exh**2
    q = rho2 / c2
    return inter, area_a, area_b, ioca, rho2, c2, q


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union, in [0, 1]."""
    inter, area_a, area_b, *_ = _pair_values(a.x, a.y, a.w, a.h, b.x, b.y, b.w, b.h)
    return float(inter / (area_a + area_b - inter))


def ioca(child: BBox, parent: BBox) -> float:
    """Intersection over the child's own area; 1 means full containment."""
    if child.area <= 0:
        raise ValueError("child box has zero area")
    vals = _pair_values(
        child.x, child.y, child.w, child.h, parent.x, parent.y, parent.w, parent.h
    )
    return float(vals[3])


def diou_cost(a: BBox, b: BBox) -> float:
    """Distance-penalized IoU cost: 1 - IoU + rho^2 / c^2."""
    inter, area_a, area_b, _, _, _, q = _pair_values(
        a.x, a.y, a.w, a.h, b.x, b.y, b.w, b.h
    )
    return float(1 - inter / (area_a + area_b - inter) + q)


def contain_pos(child: BBox, parent: BBox) -> float:
    """Positive containment cost: zero iff the child sits inside the parent.

    Equals ``(1 - IoCA) * (1 + rho^2 / c^2)``: the distance penalty is scaled
    by how much of the child is still outside, so it vanishes at containment
    but keeps pulling disjoint boxes together.
    """
    vals = _pair_values(
        child.x, child.y, child.w, child.h, parent.x, parent.y, parent.w, parent.h
    )
    ioca_v, q = vals[3], vals[6]
    return float((1 - ioca_v) * (1 + q))


def contain_neg(a: BBox, b: BBox, literal: bool = False) -> float:
    """Negative containment cost: zero iff disjoint, maximal at coincidence.

    The default form is ``IoCA * (1 - rho^2 / c^2)``, which decreases
    monotonically as box *a* slides off box *b*. ``literal=True`` selects the
    alternative ``1 - IoCA * (1 + rho^2 / c^2)`` for comparison runs; note it
    rewards rather than punishes full overlap.
    """
    vals = _pair_values(a.x, a.y, a.w, a.h, b.x, b.y, b.w, b.h)
    ioca_v, q = vals[3], vals[6]
    if literal:
        return float(1 - ioca_v * (1 + q))
    return float(ioca_v * (1 - q))


# ---------------------------------------------------------------------------
# pair geometry (values + partial derivatives)
# ---------------------------------------------------------------------------


def _lex_lt(u, iu, v, iv):
    return (u < v) | ((u == v) & (iu < iv))


def _lex_gt(u, iu, v, iv):
    return (u > v) | ((u == v) & (iu > iv))


def _pair_costs_with_grads(
    ax, ay, aw, ah, ia, bx, by, bw, bh, ib,
    literal=False, want_neg=True, want_pos=True,
):
    """Containment costs plus partials w.r.t. (xa, ya, wa, ha, xb, yb, wb, hb).

    Inputs broadcast together; partials come back as (8, ...) stacks in the
    parameter order above. min/max kinks use a subgradient that breaks exact
    ties by element index, as if box ``i`` sat infinitesimally up-left of
    box ``j`` for ``i < j``. This gives coincident boxes a deterministic
    separating descent direction; away from ties it is the true derivative.
    """
    la, ra = ax - aw / 2, ax + aw / 2
    ta, ba = ay - ah / 2, ay + ah / 2
    lb, rb = bx - bw / 2, bx + bw / 2
    tb, bb = by - bh / 2, by + bh / 2

    ow = np.minimum(ra, rb) - np.maximum(la, lb)
    oh = np.minimum(ba, bb) - np.maximum(ta, tb)
    overlap = (ow > 0) & (oh > 0)
    owp = np.where(overlap, ow, 0.0)
    ohp = np.where(overlap, oh, 0.0)
    inter = owp * ohp

    # indicator: box a attains the min/max in each edge comparison
    rmin_a = _lex_lt(ra, ia, rb, ib).astype(float)
    lmax_a = _lex_gt(la, ia, lb, ib).astype(float)
    bmin_a = _lex_lt(ba, ia, bb, ib).astype(float)
    tmax_a = _lex_gt(ta, ia, tb, ib).astype(float)
    rmax_a = _lex_gt(ra, ia, rb, ib).astype(float)
    lmin_a = _lex_lt(la, ia, lb, ib).astype(float)
    bmax_a = _lex_gt(ba, ia, bb, ib).astype(float)
    tmin_a = _lex_lt(ta, ia, tb, ib).astype(float)

    shape = np.broadcast(ax, ay, bw, bh).shape
    area_a = aw * ah
    inv_area = 1.0 / area_a
    ioca_v = inter * inv_area

    # d(IoCA): through the overlap widths, plus the own-area term on wa/ha
    iw = ohp * inv_area  # d(inter)/d(ow slot) / area, zero when disjoint
    ih = owp * inv_area
    d_ioca = np.zeros((8,) + shape)
    d_ioca[0] = iw * (rmin_a - lmax_a)
    d_ioca[1] = ih * (bmin_a - tmax_a)
    d_ioca[2] = iw * (rmin_a + lmax_a) / 2 - ioca_v / aw
    d_ioca[3] = ih * (bmin_a + tmax_a) / 2 - ioca_v / ah
    d_ioca[4] = iw * (lmax_a - rmin_a)
    d_ioca[5] = ih * (tmax_a - bmin_a)
    d_ioca[6] = iw * (2 - rmin_a - lmax_a) / 2
    d_ioca[7] = ih * (2 - bmin_a - tmax_a) / 2

    dx, dy = ax - bx, ay - by
    rho2 = dx**2 + dy**2
    exw = np.maximum(ra, rb) - np.minimum(la, lb)
    exh = np.maximum(ba, bb) - np.minimum(ta, tb)
    c2 = exw**2 + exh**2
    q = rho2 / c2

    # d(q) = (d(rho2) - q * d(c2)) / c2
    inv_c2 = 1.0 / c2
    qx = 2 * dx * inv_c2
    qy = 2 * dy * inv_c2
    cw = 2 * exw * q * inv_c2  # q * d(c2)/d(exw slot) / c2
    ch = 2 * exh * q * inv_c2
    d_q = np.zeros((8,) + shape)
    d_q[0] = qx - cw * (rmax_a - lmin_a)
    d_q[1] = qy - ch * (bmax_a - tmin_a)
    d_q[2] = -cw * (rmax_a + lmin_a) / 2
    d_q[3] = -ch * (bmax_a + tmin_a) / 2
    d_q[4] = -qx - cw * (lmin_a - rmax_a)
    d_q[5] = -qy - ch * (tmin_a - bmax_a)
    d_q[6] = -cw * (2 - rmax_a - lmin_a) / 2
    d_q[7] = -ch * (2 - bmax_a - tmin_a) / 2

    neg = d_neg = pos = d_pos = None
    if want_neg:
        if literal:
            neg = 1 - ioca_v * (1 + q)
            d_neg = -d_ioca * (1 + q) - ioca_v * d_q
        else:
            neg = ioca_v * (1 - q)
            d_neg = d_ioca * (1 - q) - ioca_v * d_q
    if want_pos:
        pos = (1 - ioca_v) * (1 + q)
        d_pos = -d_ioca * (1 + q) + (1 - ioca_v) * d_q
    return neg, d_neg, pos, d_pos


# ---------------------------------------------------------------------------
# per-layout energy context
# ---------------------------------------------------------------------------


@dataclass
class EnergyContext:
    """Precomputed masks and references for evaluating layout energies.

    Built once per layout/criteria/relations combination, then reused across
    candidate evaluations and gradient steps that only move geometry.
    """

    n: int
    orig: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    ove_mask: np.ndarray        # (n, n) pairs penalized for overlapping
    cont_mask: np.ndarray       # (n, n) child-row x parent-column pairs
    aspect_mask: np.ndarray     # (n,) aspect-preserved elements
    size_mask: np.ndarray       # (n,) size-preserved elements
    rel_i: np.ndarray           # relation endpoints, expanded per edge channel
    rel_j: np.ndarray
    rel_chan: np.ndarray
    unpaired: np.ndarray        # (n,) elements with no alignment partner
    lambda_aspect: float
    lambda_size: float
    literal_neg: bool
    saliency: SaliencyMap | None
    orig_ratio: np.ndarray | None = None

    def __post_init__(self):
        ow, oh = self.orig[2], self.orig[3]
        self.orig_ratio = ow / oh


def build_context(
    layout: Layout,
    original: Layout,
    relations: frozenset[AlignmentRelation] | set[AlignmentRelation],
    criteria: CriteriaSet,
    config: RectifyConfig,
    saliency: SaliencyMap | None = None,
) -> EnergyContext:
    n = len(layout.elements)
    cats = layout.categories()
    parent = np.array([c in criteria.parent for c in cats])
    child = np.array([c in criteria.child for c in cats])
    offdiag = ~np.eye(n, dtype=bool)

    # overlap is waived only when exactly one side is a parent category
    ove_mask = offdiag & ~(parent[:, None] ^ parent[None, :])
    cont_mask = offdiag & child[:, None] & parent[None, :]

    aspect_mask = np.array([c in criteria.preserve_aspect for c in cats])
    size_mask = np.array([c in criteria.preserve_size for c in cats])

    index_of = {e.id: k for k, e in enumerate(layout.elements)}
    ri: list[int] = []
    rj: list[int] = []
    rc: list[int] = []
    paired = np.zeros(n, dtype=bool)
    for rel in relations:
        a, b = index_of[rel.i], index_of[rel.j]
        paired[a] = paired[b] = True
        for chan in _KIND_CHANNELS[rel.kind]:
            ri.append(a)
            rj.append(b)
            rc.append(chan)

    return EnergyContext(
        n=n,
        orig=element_arrays(original),
        ove_mask=ove_mask,
        cont_mask=cont_mask,
        aspect_mask=aspect_mask,
        size_mask=size_mask,
        rel_i=np.array(ri, dtype=int),
        rel_j=np.array(rj, dtype=int),
        rel_chan=np.array(rc, dtype=int),
        unpaired=~paired,
        lambda_aspect=config.lambda_aspect,
        lambda_size=config.lambda_size,
        literal_neg=config.eq3_literal,
        saliency=saliency,
    )


@dataclass(frozen=True)
class EnergyBreakdown:
    """Per-term energy values; ``total`` applies the lambda weights."""

    align: float
    dist: float
    ove: float
    cont: float
    aspect: float
    size: float
    occ: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return {
            "align": self.align,
            "dist": self.dist,
            "ove": self.ove,
            "cont": self.cont,
            "aspect": self.aspect,
            "size": self.size,
            "occ": self.occ,
            "total": self.total,
        }


def _pair_cost_matrices(x, y, w, h, literal):
    idx = np.arange(x.size)
    ax, bx = x[:, None], x[None, :]
    ay, by = y[:, None], y[None, :]
    aw, bw = w[:, None], w[None, :]
    ah, bh = h[:, None], h[None, :]
    inter, area_a, _, ioca_m, _, _, q = _pair_values(ax, ay, aw, ah, bx, by, bw, bh)
    if literal:
        neg = 1 - ioca_m * (1 + q)
    else:
        neg = ioca_m * (1 - q)
    pos = (1 - ioca_m) * (1 + q)
    return neg, pos


def _min_edge_distance(x, y, w, h) -> np.ndarray:
    """Per element: min over the six edge channels of the nearest neighbor."""
    n = x.size
    if n < 2:
        return np.zeros(n)
    chans = _edge_channels(x, y, w, h)
    d = np.abs(chans[:, :, None] - chans[:, None, :]).min(axis=0)
    np.fill_diagonal(d, np.inf)
    return d.min(axis=1)


def _align_terms(x, y, w, h, ctx: EnergyContext) -> float:
    paired = 0.0
    if ctx.rel_i.size:
        chans = _edge_channels(x, y, w, h)
        vi = chans[ctx.rel_chan, ctx.rel_i]
        vj = chans[ctx.rel_chan, ctx.rel_j]
        paired = float(np.abs(vi - vj).sum())
    unpaired = 0.0
    if ctx.unpaired.any() and ctx.n >= 2:
        d = _min_edge_distance(x, y, w, h)[ctx.unpaired]
        unpaired = float(-np.log(np.clip(1 - d, LOG_CLAMP, 1.0)).sum())
    return paired + unpaired


def _occlusion_term(x, y, w, h, saliency: SaliencyMap) -> float:
    total = 0.0
    for i in range(x.size):
        total += saliency.box_mean(
            x[i] - w[i] / 2, y[i] - h[i] / 2, x[i] + w[i] / 2, y[i] + h[i] / 2
        )
    return total


def total_energy_arrays(x, y, w, h, ctx: EnergyContext) -> EnergyBreakdown:
    neg, pos = _pair_cost_matrices(x, y, w, h, ctx.literal_neg)
    ove = float(neg[ctx.ove_mask].sum())
    cont = 2 * float(pos[ctx.cont_mask].sum())

    ox, oy, ow, oh = ctx.orig
    dist = float(((x - ox) ** 2 + (y - oy) ** 2).sum())
    aspect = 0.0
    if ctx.aspect_mask.any():
        r = w[ctx.aspect_mask] / h[ctx.aspect_mask]
        aspect = float(((r - ctx.orig_ratio[ctx.aspect_mask]) ** 2).sum())
    size = 0.0
    if ctx.size_mask.any():
        m = ctx.size_mask
        size = float(((w[m] - ow[m]) ** 2 + (h[m] - oh[m]) ** 2).sum())

    align = _align_terms(x, y, w, h, ctx)
    occ = _occlusion_term(x, y, w, h, ctx.saliency) if ctx.saliency is not None else 0.0

    total = (
        align + dist + ove + cont
        + ctx.lambda_aspect * aspect + ctx.lambda_size * size + occ
    )
    return EnergyBreakdown(align, dist, ove, cont, aspect, size, occ, total)


def total_energy_batch(xs, ys, ws, hs, ctx: EnergyContext) -> np.ndarray:
    """Total energy for a batch of layout variants; inputs are (C, n).

    Matches :func:`total_energy_arrays` row by row; used to score all snap
    candidates of one element in a single vectorized pass.
    """
    c, n = xs.shape
    inter, area_a, _, ioca_m, _, _, q = _pair_values(
        xs[:, :, None], ys[:, :, None], ws[:, :, None], hs[:, :, None],
        xs[:, None, :], ys[:, None, :], ws[:, None, :], hs[:, None, :],
    )
    if ctx.literal_neg:
        neg = 1 - ioca_m * (1 + q)
    else:
        neg = ioca_m * (1 - q)
    totals = (neg * ctx.ove_mask).sum(axis=(1, 2))
    if ctx.cont_mask.any():
        pos = (1 - ioca_m) * (1 + q)
        totals += 2 * (pos * ctx.cont_mask).sum(axis=(1, 2))

    ox, oy, ow, oh = ctx.orig
    totals += ((xs - ox) ** 2 + (ys - oy) ** 2).sum(axis=1)
    if ctx.aspect_mask.any():
        m = ctx.aspect_mask
        r = ws[:, m] / hs[:, m]
        totals += ctx.lambda_aspect * ((r - ctx.orig_ratio[m]) ** 2).sum(axis=1)
    if ctx.size_mask.any():
        m = ctx.size_mask
        totals += ctx.lambda_size * (
            (ws[:, m] - ow[m]) ** 2 + (hs[:, m] - oh[m]) ** 2
        ).sum(axis=1)

    chans = np.stack(
        [xs - ws / 2, xs, xs + ws / 2, ys - hs / 2, ys, ys + hs / 2]
    )  # (6, C, n)
    if ctx.rel_i.size:
        vi = chans[ctx.rel_chan, :, ctx.rel_i]  # (R, C)
        vj = chans[ctx.rel_chan, :, ctx.rel_j]
        totals += np.abs(vi - vj).sum(axis=0)
    if ctx.unpaired.any() and n >= 2:
        d6 = np.abs(chans[:, :, :, None] - chans[:, :, None, :]).min(axis=0)
        idx = np.arange(n)
        d6[:, idx, idx] = np.inf
        d = d6.min(axis=2)[:, ctx.unpaired]
        totals += -np.log(np.clip(1 - d, LOG_CLAMP, 1.0)).sum(axis=1)

    if ctx.saliency is not None:
        means = ctx.saliency.box_mean_arrays(
            xs - ws / 2, ys - hs / 2, xs + ws / 2, ys + hs / 2
        )
        totals += means.sum(axis=1)
    return totals


def _channel_min_matrix(x, y, w, h) -> np.ndarray:
    """(n, n) matrix of per-pair minimum edge-channel distance."""
    chans = _edge_channels(x, y, w, h)
    d = np.abs(chans[0][:, None] - chans[0][None, :])
    for k in range(1, 6):
        np.minimum(d, np.abs(chans[k][:, None] - chans[k][None, :]), out=d)
    return d


def candidate_energies(x, y, w, h, e: int, cand: np.ndarray, ctx: EnergyContext) -> np.ndarray:
    """Total energies when element ``e`` takes each candidate box.

    ``cand`` is (C, 4) rows of (x, y, w, h). Equivalent to evaluating
    :func:`total_energy_batch` with only column ``e`` varying, but does the
    candidate-dependent work in O(C n) instead of O(C n^2): terms not
    involving ``e`` are computed once from the current arrays.
    """
    n = x.size
    c = cand.shape[0]
    cx, cy, cw, ch = cand[:, 0], cand[:, 1], cand[:, 2], cand[:, 3]
    totals = np.zeros(c)

    keep = np.ones(n, dtype=bool)
    keep[e] = False

    if n >= 2:
        # pairwise overlap / containment: frozen part plus e's row and column
        _, _, _, ioca_m, _, _, q = _pair_values(
            x[:, None], y[:, None], w[:, None], h[:, None],
            x[None, :], y[None, :], w[None, :], h[None, :],
        )
        neg_full = (1 - ioca_m * (1 + q)) if ctx.literal_neg else ioca_m * (1 - q)
        rest = ctx.ove_mask.copy()
        rest[e, :] = False
        rest[:, e] = False
        totals += (neg_full * rest).sum()
        if ctx.cont_mask.any():
            pos_full = (1 - ioca_m) * (1 + q)
            crest = ctx.cont_mask.copy()
            crest[e, :] = False
            crest[:, e] = False
            totals += 2 * (pos_full * crest).sum()

        # e as first (IoCA-owner) box against everyone
        _, _, _, i_ej, _, _, q_ej = _pair_values(
            cx[:, None], cy[:, None], cw[:, None], ch[:, None],
            x[None, :], y[None, :], w[None, :], h[None, :],
        )
        # everyone against e
        _, _, _, i_je, _, _, q_je = _pair_values(
            x[None, :], y[None, :], w[None, :], h[None, :],
            cx[:, None], cy[:, None], cw[:, None], ch[:, None],
        )
        if ctx.literal_neg:
            neg_ej = 1 - i_ej * (1 + q_ej)
            neg_je = 1 - i_je * (1 + q_je)
        else:
            neg_ej = i_ej * (1 - q_ej)
            neg_je = i_je * (1 - q_je)
        totals += (neg_ej * ctx.ove_mask[e]).sum(axis=1)
        totals += (neg_je * ctx.ove_mask[:, e]).sum(axis=1)
        if ctx.cont_mask.any():
            pos_ej = (1 - i_ej) * (1 + q_ej)
            pos_je = (1 - i_je) * (1 + q_je)
            totals += 2 * (pos_ej * ctx.cont_mask[e]).sum(axis=1)
            totals += 2 * (pos_je * ctx.cont_mask[:, e]).sum(axis=1)

    ox, oy, ow, oh = ctx.orig
    totals += float(((x[keep] - ox[keep]) ** 2 + (y[keep] - oy[keep]) ** 2).sum())
    totals += (cx - ox[e]) ** 2 + (cy - oy[e]) ** 2
    if ctx.aspect_mask.any():
        m = ctx.aspect_mask & keep
        totals += ctx.lambda_aspect * float(
            ((w[m] / h[m] - ctx.orig_ratio[m]) ** 2).sum()
        )
        if ctx.aspect_mask[e]:
            totals += ctx.lambda_aspect * (cw / ch - ctx.orig_ratio[e]) ** 2
    if ctx.size_mask.any():
        m = ctx.size_mask & keep
        totals += ctx.lambda_size * float(
            ((w[m] - ow[m]) ** 2 + (h[m] - oh[m]) ** 2).sum()
        )
        if ctx.size_mask[e]:
            totals += ctx.lambda_size * ((cw - ow[e]) ** 2 + (ch - oh[e]) ** 2)

    if ctx.rel_i.size:
        chans = _edge_channels(x, y, w, h)           # (6, n)
        cchans = _edge_channels(cx, cy, cw, ch)      # (6, C)
        involved = (ctx.rel_i == e) | (ctx.rel_j == e)
        if (~involved).any():
            ri, rj, rc = ctx.rel_i[~involved], ctx.rel_j[~involved], ctx.rel_chan[~involved]
            totals += float(np.abs(chans[rc, ri] - chans[rc, rj]).sum())
        for r in np.flatnonzero(involved):
            other = ctx.rel_j[r] if ctx.rel_i[r] == e else ctx.rel_i[r]
            totals += np.abs(cchans[ctx.rel_chan[r]] - chans[ctx.rel_chan[r], other])

    if ctx.unpaired.any() and n >= 2:
        d_full = _channel_min_matrix(x, y, w, h)
        d_full[:, e] = np.inf
        np.fill_diagonal(d_full, np.inf)
        d_wo_e = d_full.min(axis=1)                  # (n,) best ignoring e
        chans = _edge_channels(x, y, w, h)
        cchans = _edge_channels(cx, cy, cw, ch)
        d_e = np.abs(cchans[0][:, None] - chans[0][None, :])
        for k in range(1, 6):
            np.minimum(d_e, np.abs(cchans[k][:, None] - chans[k][None, :]), out=d_e)
        d_e[:, e] = np.inf                           # (C, n) candidate vs others
        others_unpaired = ctx.unpaired & keep
        if others_unpaired.any():
            d_i = np.minimum(d_wo_e[others_unpaired], d_e[:, others_unpaired])
            totals += -np.log(np.clip(1 - d_i, LOG_CLAMP, 1.0)).sum(axis=1)
        if ctx.unpaired[e]:
            d_own = d_e.min(axis=1)
            totals += -np.log(np.clip(1 - d_own, LOG_CLAMP, 1.0))

    if ctx.saliency is not None:
        base = ctx.saliency.box_mean_arrays(
            x[keep] - w[keep] / 2, y[keep] - h[keep] / 2,
            x[keep] + w[keep] / 2, y[keep] + h[keep] / 2,
        )
        totals += float(base.sum())
        totals += ctx.saliency.box_mean_arrays(
            cx - cw / 2, cy - ch / 2, cx + cw / 2, cy + ch / 2
        )
    return totals


def stage_b_objective_arrays(x, y, w, h, ctx: EnergyContext) -> float:
    """Continuous-stage objective: overlap + containment + preservation."""
    neg, pos = _pair_cost_matrices(x, y, w, h, ctx.literal_neg)
    val = float(neg[ctx.ove_mask].sum()) + 2 * float(pos[ctx.cont_mask].sum())
    if ctx.aspect_mask.any():
        r = w[ctx.aspect_mask] / h[ctx.aspect_mask]
        val += ctx.lambda_aspect * float(
            ((r - ctx.orig_ratio[ctx.aspect_mask]) ** 2).sum()
        )
    if ctx.size_mask.any():
        m = ctx.size_mask
        ow, oh = ctx.orig[2], ctx.orig[3]
        val += ctx.lambda_size * float(
            ((w[m] - ow[m]) ** 2 + (h[m] - oh[m]) ** 2).sum()
        )
    return val


def _accumulate_pair_grads(d_stack, mask, grads):
    """Fold masked (8, n, n) partials into per-element (n, 4) gradients."""
    m = mask.astype(float)
    for col, (slot_a, slot_b) in enumerate(((0, 4), (1, 5), (2, 6), (3, 7))):
        grads[:, col] += (d_stack[slot_a] * m).sum(axis=1)
        grads[:, col] += (d_stack[slot_b] * m).sum(axis=0)


def stage_b_gradient_arrays(x, y, w, h, ctx: EnergyContext) -> np.ndarray:
    """Analytic gradient of the continuous-stage objective, shape (n, 4)."""
    n = x.size
    grads = np.zeros((n, 4))
    if n >= 2:
        idx = np.arange(n)
        want_neg = bool(ctx.ove_mask.any())
        want_pos = bool(ctx.cont_mask.any())
        neg, d_neg, pos, d_pos = _pair_costs_with_grads(
            x[:, None], y[:, None], w[:, None], h[:, None], idx[:, None],
            x[None, :], y[None, :], w[None, :], h[None, :], idx[None, :],
            literal=ctx.literal_neg, want_neg=want_neg, want_pos=want_pos,
        )
        if want_neg:
            _accumulate_pair_grads(d_neg, ctx.ove_mask, grads)
        if want_pos:
            _accumulate_pair_grads(d_pos * 2.0, ctx.cont_mask, grads)

    if ctx.aspect_mask.any():
        m = ctx.aspect_mask
        r = w[m] / h[m]
        diff = 2 * (r - ctx.orig_ratio[m]) * ctx.lambda_aspect
        grads[m, 2] += diff / h[m]
        grads[m, 3] += -diff * w[m] / h[m] ** 2
    if ctx.size_mask.any():
        m = ctx.size_mask
        ow, oh = ctx.orig[2], ctx.orig[3]
        grads[m, 2] += 2 * ctx.lambda_size * (w[m] - ow[m])
        grads[m, 3] += 2 * ctx.lambda_size * (h[m] - oh[m])
    return grads


# ---------------------------------------------------------------------------
# layout-level API
# ---------------------------------------------------------------------------


def _ctx_for(layout, original, relations, criteria, config, saliency=None):
    return build_context(layout, original, relations, criteria, config, saliency)


def energy_align(layout: Layout, relations, snapped: Layout | None = None) -> float:
    """Alignment energy: paired |edge - edge| terms for related elements plus
    the -log(1 - d) nearest-edge loss for elements with no relation."""
    target = snapped if snapped is not None else layout
    ctx = _ctx_for(target, target, relations, CriteriaSet(), RectifyConfig())
    x, y, w, h = element_arrays(target)
    return _align_terms(x, y, w, h, ctx)


def energy_overlap(layout: Layout, criteria: CriteriaSet, literal: bool = False) -> float:
    ctx = _ctx_for(layout, layout, frozenset(), criteria,
                   RectifyConfig(eq3_literal=literal))
    x, y, w, h = element_arrays(layout)
    neg, _ = _pair_cost_matrices(x, y, w, h, literal)
    return float(neg[ctx.ove_mask].sum())


def energy_containment(layout: Layout, criteria: CriteriaSet) -> float:
    ctx = _ctx_for(layout, layout, frozenset(), criteria, RectifyConfig())
    x, y, w, h = element_arrays(layout)
    _, pos = _pair_cost_matrices(x, y, w, h, False)
    return 2 * float(pos[ctx.cont_mask].sum())


def energy_aspect(layout: Layout, original: Layout, criteria: CriteriaSet) -> float:
    total = 0.0
    for e, o in zip(layout.elements, original.elements):
        if e.category in criteria.preserve_aspect:
            if e.box.h == 0 or o.box.h == 0:
                raise ValueError(f"zero height on element {e.id!r}")
            total += (e.box.w / e.box.h - o.box.w / o.box.h) ** 2
    return total


def energy_size(layout: Layout, original: Layout, criteria: CriteriaSet) -> float:
    total = 0.0
    for e, o in zip(layout.elements, original.elements):
        if e.category in criteria.preserve_size:
            total += (e.box.w - o.box.w) ** 2 + (e.box.h - o.box.h) ** 2
    return total


def energy_dist(layout: Layout, original: Layout) -> float:
    """Squared center displacement from the input layout."""
    total = 0.0
    for e, o in zip(layout.elements, original.elements):
        total += (e.box.x - o.box.x) ** 2 + (e.box.y - o.box.y) ** 2
    return total


def energy_occlusion(layout: Layout, saliency: SaliencyMap) -> float:
    """Sum over elements of mean saliency under each element's footprint."""
    if saliency is None:
        raise ValueError("saliency map required for the occlusion term")
    x, y, w, h = element_arrays(layout)
    return _occlusion_term(x, y, w, h, saliency)


def total_energy(
    layout: Layout,
    original: Layout,
    relations,
    criteria: CriteriaSet,
    config: RectifyConfig,
    saliency: SaliencyMap | None = None,
) -> EnergyBreakdown:
    ctx = build_context(layout, original, relations, criteria, config, saliency)
    x, y, w, h = element_arrays(layout)
    return total_energy_arrays(x, y, w, h, ctx)


def gradient(
    layout: Layout,
    original: Layout,
    relations,
    criteria: CriteriaSet,
    config: RectifyConfig,
) -> np.ndarray:
    """Gradient of the continuous-stage objective w.r.t. each (x, y, w, h).

    ``relations`` is accepted for signature symmetry with
    :func:`total_energy`; the continuous stage does not touch alignment.
    Raises :class:`NumericError` naming the element and term if any entry is
    non-finite.
    """
    ctx = build_context(layout, original, relations, criteria, config)
    x, y, w, h = element_arrays(layout)
    grads = stage_b_gradient_arrays(x, y, w, h, ctx)
    if not np.isfinite(grads).all():
        bad = np.argwhere(~np.isfinite(grads))
        i, col = int(bad[0][0]), int(bad[0][1])
        term = _diagnose_nonfinite(x, y, w, h, ctx, i)
        raise NumericError(
            f"non-finite gradient for element {layout.elements[i].id!r} "
            f"(parameter {'xywh'[col]}, term {term})"
        )
    return grads


def _diagnose_nonfinite(x, y, w, h, ctx, i) -> str:
    probes = {
        "overlap": lambda: _pair_cost_matrices(x, y, w, h, ctx.literal_neg)[0][ctx.ove_mask],
        "containment": lambda: _pair_cost_matrices(x, y, w, h, False)[1][ctx.cont_mask],
        "aspect": lambda: w[ctx.aspect_mask] / h[ctx.aspect_mask],
    }
    for name, probe in probes.items():
        try:
            if not np.isfinite(probe()).all():
                return name
        except Exception:
            return name
    return "unknown"
