"""Command-line interface.

Subcommands: build-grids, rectify, evaluate, render, render-diff.
Exit codes: 0 success, 2 validation error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .alignment import extract_alignments, relations_to_json
from .core import (
    Layout,
    LayoutError,
    NumericError,
    RectifyConfig,
    parse_criteria,
    parse_layout,
    serialize_layout,
)
from .grid import build_grid_index, load_grid_index, save_grid_index
from .metrics import compute_metrics, load_saliency
from .optimizer import rectify, rectify_all, select_best
from .render import RenderStyle, render_diff, render_svg


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _load_config(args: argparse.Namespace) -> RectifyConfig:
    config = RectifyConfig()
    if getattr(args, "config", None):
        config = RectifyConfig.from_json(_read(args.config))
    return config.merged(
        num_exemplars=getattr(args, "exemplars", None),
        outer_iters=getattr(args, "outer_iters", None),
        adam_iters=getattr(args, "adam_iters", None),
        gutter=getattr(args, "gutter", None),
        eq3_literal=True if getattr(args, "eq3_literal", False) else None,
        enable_stage_a=False if getattr(args, "no_stage_a", False) else None,
        enable_stage_b=False if getattr(args, "no_stage_b", False) else None,
    )


def _cmd_build_grids(args: argparse.Namespace) -> int:
    corpus_dir = Path(args.corpus)
    files = sorted(corpus_dir.glob("*.json"))
    if not files:
        raise LayoutError(f"no layout JSON files in {corpus_dir}")
    corpus = [(f.stem, parse_layout(f.read_text(encoding="utf-8"))) for f in files]
    index = build_grid_index(corpus, args.gutter)
    save_grid_index(index, args.out)
    print(f"wrote {len(index)} grids to {args.out}")
    return 0


def _cmd_rectify(args: argparse.Namespace) -> int:
    if args.reduce_blank:
        raise LayoutError("--reduce-blank is not implemented (supplement-only term)")
    criteria = parse_criteria(_read(args.criteria))
    layout = parse_layout(_read(args.input), criteria)
    grid_index = load_grid_index(args.grids)
    saliency = load_saliency(args.saliency) if args.saliency else None
    config = _load_config(args)

    if args.dump_relations:
        relations = extract_alignments(layout, config.align_angle_deg)
        Path(args.dump_relations).write_text(
            json.dumps(relations_to_json(relations), indent=2) + "\n"
        )

    collect_trace = bool(args.trace)
    if args.emit_all:
        results = rectify_all(layout, criteria, grid_index, config, saliency, collect_trace)
        best = select_best(results, layout, config)
        out_dir = Path(args.out).parent
        manifest = []
        for r in results:
            path = out_dir / f"{Path(args.out).stem}.{r.exemplar_source}.json"
            path.write_text(serialize_layout(r.layout) + "\n")
            manifest.append(
                {"exemplar": r.exemplar_source, "flaw_score": r.flaw_score, "path": str(path)}
            )
        Path(args.out).write_text(serialize_layout(best.layout) + "\n")
        print(json.dumps(manifest, indent=2))
        result = best
    else:
        result = rectify(layout, criteria, grid_index, config, saliency, collect_trace)
        Path(args.out).write_text(serialize_layout(result.layout) + "\n")

    if args.trace:
        trace_dir = Path(args.trace)
        trace_dir.mkdir(parents=True, exist_ok=True)
        trace_path = trace_dir / f"trace.{result.exemplar_source}.jsonl"
        with open(trace_path, "w") as f:
            for entry in result.trace or ():
                f.write(json.dumps(entry) + "\n")

    summary = {
        "exemplar": result.exemplar_source,
        "flaw_score": result.flaw_score,
        "before": result.metrics_before.as_dict(),
        "after": result.metrics_after.as_dict(),
    }
    print(json.dumps(summary, indent=2), file=sys.stderr)
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    criteria = parse_criteria(_read(args.criteria))
    saliency = load_saliency(args.saliency) if args.saliency else None
    if args.batch:
        files = sorted(Path(args.batch).glob("*.json"))
        if not files:
            raise LayoutError(f"no layout JSON files in {args.batch}")
        sums: dict[str, list[float]] = {}
        for f in files:
            layout = parse_layout(f.read_text(encoding="utf-8"), criteria)
            bundle = compute_metrics(layout, criteria, saliency).as_dict()
            print(json.dumps({"file": f.name, **bundle}))
            for k, v in bundle.items():
                sums.setdefault(k, []).append(v)
        mean_row = {k: sum(v) / len(v) for k, v in sums.items()}
        print(json.dumps({"file": "MEAN", **mean_row}))
        return 0
    layout = parse_layout(_read(args.input), criteria)
    reference = parse_layout(_read(args.reference), criteria) if args.reference else None
    bundle = compute_metrics(layout, criteria, saliency, reference)
    print(json.dumps(bundle.as_dict()))
    return 0


def _cmd_render(args: argparse.Namespace) -> int:
    layout = parse_layout(_read(args.layout))
    grid = None
    if args.grid:
        index = load_grid_index(args.grid)
        if args.grid_id:
            matches = [g for g, _ in index if g.source_id == args.grid_id]
            if not matches:
                raise LayoutError(f"grid id {args.grid_id!r} not found in {args.grid}")
            grid = matches[0]
        else:
            grid = index[0][0]
    relations = extract_alignments(layout) if args.relations else None
    Path(args.out).write_text(render_svg(layout, RenderStyle(), grid, relations))
    return 0


def _cmd_render_diff(args: argparse.Namespace) -> int:
    before = parse_layout(_read(args.before))
    after = parse_layout(_read(args.after))
    Path(args.out).write_text(render_diff(before, after, RenderStyle()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layoutfix",
        description="Repair misalignment, overlap, and containment flaws in "
        "generated graphic-design layouts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-grids", help="construct a grid index from a layout corpus")
    p.add_argument("--corpus", required=True, help="directory of layout JSON files")
    p.add_argument("--gutter", type=float, default=0.01)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build_grids)

    p = sub.add_parser("rectify", help="rectify one layout")
    p.add_argument("--input", required=True)
    p.add_argument("--criteria", required=True)
    p.add_argument("--grids", required=True)
    p.add_argument("--saliency")
    p.add_argument("--config")
    p.add_argument("--exemplars", type=int)
    p.add_argument("--outer-iters", type=int, dest="outer_iters")
    p.add_argument("--adam-iters", type=int, dest="adam_iters")
    p.add_argument("--trace", help="directory for per-iteration energy JSON lines")
    p.add_argument("--emit-all", action="store_true", help="write all exemplar branches")
    p.add_argument("--dump-relations", dest="dump_relations")
    p.add_argument("--eq3-literal", action="store_true", dest="eq3_literal")
    p.add_argument("--no-stage-a", action="store_true", dest="no_stage_a")
    p.add_argument("--no-stage-b", action="store_true", dest="no_stage_b")
    p.add_argument("--reduce-blank", action="store_true", dest="reduce_blank")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_rectify)

    p = sub.add_parser("evaluate", help="compute layout quality metrics")
    p.add_argument("--input")
    p.add_argument("--reference")
    p.add_argument("--criteria", required=True)
    p.add_argument("--saliency")
    p.add_argument("--batch", help="directory of layouts; JSON lines plus a mean row")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("render", help="render a layout to SVG")
    p.add_argument("--layout", required=True)
    p.add_argument("--grid", help="grid index JSON for the overlay")
    p.add_argument("--grid-id", dest="grid_id")
    p.add_argument("--relations", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("render-diff", help="side-by-side before/after SVG")
    p.add_argument("--before", required=True)
    p.add_argument("--after", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_render_diff)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "evaluate" and not args.batch and not args.input:
        parser.error("evaluate requires --input or --batch")
    try:
        return args.func(args)
    except LayoutError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
