"""Grid-guided rectification of machine-generated graphic design layouts.

Repairs misalignment, unwanted overlap, and unsatisfied containment in a
layout while deviating from the input as little as possible. Grid systems
extracted from an exemplar corpus supply snap targets for a discrete
search-and-snap stage; a differentiable box-containment objective drives a
continuous Adam stage; the two alternate for a few rounds per retrieved
exemplar and the least-flawed branch wins.
"""

from .alignment import AlignmentRelation, aligned, extract_alignments
from .core import (
    BBox,
    CriteriaSet,
    Element,
    Layout,
    LayoutError,
    NumericError,
    RectifyConfig,
    clamp_layout,
    layouts_equal,
    parse_criteria,
    parse_layout,
    serialize_layout,
)
from .energy import (
    EnergyBreakdown,
    contain_neg,
    contain_pos,
    diou_cost,
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
    total_energy,
)
from .grid import (
    GridSystem,
    SnapLineSet,
    build_grid_index,
    construct_grid,
    corpus_boundary,
    layout_similarity,
    load_grid_index,
    retrieve_exemplars,
    save_grid_index,
    snap_lines,
)
from .metrics import (
    MetricBundle,
    compute_metrics,
    metric_align,
    metric_containment,
    metric_occlusion,
    metric_overlap,
    metric_similarity,
)
from .optimizer import (
    AdamState,
    RectifyResult,
    SnapCandidate,
    enumerate_candidates,
    flaw_score,
    rectify,
    rectify_all,
    select_best,
    stage_a,
    stage_b,
)
from .render import RenderStyle, render_diff, render_svg
from .saliency import SaliencyMap, load_saliency

__version__ = "0.1.0"
