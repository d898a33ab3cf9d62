"""Command-line pipeline: compile, search, schedule, approx-report, emit.

Every failure is tagged with its pipeline stage and mapped to a distinct
exit code, so callers can tell a malformed model document from an
infeasible search space without parsing messages.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from .approx import ApproxConfig, error_report, reports_to_csv
from .dse import (
    SearchConfig,
    SpaceCaps,
    compare_searches,
    enumerate_space,
    evaluations_to_csv,
    exhaustive_search,
    heuristic_search,
    pareto_front,
    pareto_to_csv,
    search_summary_json,
)
from .errors import StageError, VitmapError
from .hw import graph_latency, parse_hardware
from .layout import (
    ScheduleKind,
    schedule_layernorm,
    schedule_row_parallel,
    schedule_softmax,
)
from .manifest import (
    build_manifest,
    emit_template_params,
    manifest_to_json,
    template_params_from_manifest,
)
from .model_ir import analyze, batch_expand, build_dag, fuse_qkv, parse_model

STAGE_EXIT_CODES = {
    "model": 2,
    "hardware": 3,
    "search": 4,
    "schedule": 5,
    "emit": 6,
    "approx": 7,
}

_PRESETS = {
    "deit-tiny": "deit_tiny.json",
    "deit-small": "deit_small.json",
    "deit-base": "deit_base.json",
    "vu9p": "vu9p.json",
}


def _load_doc(spec: str, stage: str) -> dict:
    """Read a JSON document from a path or a built-in preset name."""
    try:
        if spec in _PRESETS:
            text = resources.files("vitmap.presets").joinpath(_PRESETS[spec]).read_text()
        else:
            text = Path(spec).read_text(encoding="utf-8")
        return json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise StageError(stage, f"cannot read {spec}: {exc}") from exc


def _stage(stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except VitmapError as exc:
        raise StageError(stage, str(exc)) from exc


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _space_caps(args) -> SpaceCaps:
    return SpaceCaps(
        tn_max=args.tn_cap, tm_max=args.tm_cap, pn_max=args.pn_cap,
        tn_step=args.tn_step, tm_step=args.tm_step,
    )


def _search_config(args) -> SearchConfig:
    doc = {}
    if args.search_config:
        doc = _load_doc(args.search_config, "search")
    doc.setdefault("seed", args.seed)
    for key, flag in (("set_size", args.set_size), ("iterations", args.iterations),
                      ("preservation_size", args.preservation),
                      ("max_evaluations", args.max_evals)):
        if flag is not None:
            doc[key] = flag
    return _stage("search", SearchConfig.from_doc, doc)


def _build_schedules(spec, hw) -> dict:
    """Static schedules per op kind; one bank feeds one kernel per step."""
    rows = spec.num_tokens * spec.batch
    bn = hw.ddr_banks
    kinds = {
        ScheduleKind.MATMUL_ROW_PARALLEL: lambda: schedule_row_parallel(rows, bn, bn),
        ScheduleKind.GELU: lambda: schedule_row_parallel(rows, bn, bn, ScheduleKind.GELU),
        ScheduleKind.SOFTMAX: lambda: schedule_softmax(spec.num_heads, bn, rows),
        ScheduleKind.LAYERNORM: lambda: schedule_layernorm(rows, bn, bn),
    }
    return {kind.value: json.loads(make().to_json()) for kind, make in kinds.items()}


def cmd_compile(args) -> int:
    model_doc = _load_doc(args.model, "model")
    spec = _stage("model", parse_model, model_doc)
    dag = _stage("model", build_dag, spec)
    hw = _stage("hardware", parse_hardware, _load_doc(args.hw, "hardware"))
    if args.fuse:
        dag = _stage("model", fuse_qkv, dag, hw)
    batch = args.batch if args.batch is not None else spec.batch
    dag = _stage("model", batch_expand, dag, batch)

    space = _stage("search", enumerate_space, dag, hw, _space_caps(args))
    if args.exhaustive:
        size = space.feasible_size()
        if size > args.exhaustive_cap and not args.force:
            raise StageError("search", f"space has {size} points > cap "
                                       f"{args.exhaustive_cap}; pass --force to override")
        result = _stage("search", exhaustive_search, dag, hw, space)
        mode = "exhaustive"
    else:
        result = _stage("search", heuristic_search, dag, hw, space, _search_config(args))
        mode = "heuristic"

    tiles = result.best.tiles
    cost = _stage("search", graph_latency, dag, tiles, hw)
    schedules = _stage("schedule", _build_schedules, spec, hw)
    approx_cfg = _approx_config(args)
    manifest = build_manifest(
        model_doc=model_doc, hw=hw, tiles=tiles, graph_cost=cost,
        schedules=schedules, approx_summary=approx_cfg.describe(),
        seed=args.seed, tool_version=__version__,
        search_meta={
            "mode": mode,
            "space_size": space.feasible_size(),
            "evaluations_used": result.evaluations_used,
            "best_latency_s": result.best.latency_s,
        },
    )
    out_dir = Path(args.out_dir)
    _write(out_dir / "manifest.json", manifest_to_json(manifest))
    report = analyze(dag)
    _write(out_dir / "analysis.json", report.to_json())
    _write(out_dir / "analysis.csv", report.to_csv())
    print(f"compiled {spec.name}: tiles pn={tiles.pn} pm={tiles.pm} "
          f"tn={tiles.tn} tm={tiles.tm}, latency {cost.total_latency_s:.6g} s "
          f"({result.evaluations_used} evaluations)")
    return 0


def cmd_search(args) -> int:
    spec = _stage("model", parse_model, _load_doc(args.model, "model"))
    dag = _stage("model", build_dag, spec)
    hw = _stage("hardware", parse_hardware, _load_doc(args.hw, "hardware"))
    if args.fuse:
        dag = _stage("model", fuse_qkv, dag, hw)
    dag = _stage("model", batch_expand, dag, spec.batch)
    space = _stage("search", enumerate_space, dag, hw, _space_caps(args))
    out_dir = Path(args.out_dir)

    results = {}
    if args.mode in ("exhaustive", "both"):
        size = space.feasible_size()
        if size > args.exhaustive_cap and not args.force:
            raise StageError("search", f"space has {size} points > cap "
                                       f"{args.exhaustive_cap}; pass --force to override")
        results["exhaustive"] = _stage("search", exhaustive_search, dag, hw, space)
    if args.mode in ("heuristic", "both"):
        results["heuristic"] = _stage("search", heuristic_search, dag, hw, space,
                                      _search_config(args))

    for name, result in results.items():
        _write(out_dir / f"evals_{name}.csv", evaluations_to_csv(result))
        _write(out_dir / f"search_{name}.json", search_summary_json(result))
        front = pareto_front(result.all_evaluated)
        _write(out_dir / f"pareto_{name}.csv", pareto_to_csv(front))
        print(f"{name}: best latency {result.best.latency_s:.6g} s at "
              f"pn={result.best.tiles.pn} tn={result.best.tiles.tn} "
              f"tm={result.best.tiles.tm} ({result.evaluations_used} evaluations)")
    if args.mode == "both":
        report = compare_searches(results["exhaustive"], results["heuristic"])
        _write(out_dir / "comparison.json", report.to_json())
        print(f"comparison: evaluation ratio {report.evaluation_ratio:.4f}, "
              f"latency gap {report.best_latency_gap_rel:.4%}, "
              f"pareto coverage {report.pareto_coverage:.1%}")
    return 0


def cmd_schedule(args) -> int:
    spec = _stage("model", parse_model, _load_doc(args.model, "model"))
    hw = _stage("hardware", parse_hardware, _load_doc(args.hw, "hardware"))
    rows = spec.num_tokens * spec.batch
    bn = hw.ddr_banks
    schedules = {
        "row_parallel": schedule_row_parallel(rows, bn, bn),
        "gelu": schedule_row_parallel(rows, bn, bn, ScheduleKind.GELU),
        "softmax": schedule_softmax(spec.num_heads, bn, rows),
        "layernorm": schedule_layernorm(rows, bn, bn),
    }
    out_dir = Path(args.out_dir)
    for name, sched in schedules.items():
        _write(out_dir / f"schedule_{name}.trace", sched.to_trace())
        _write(out_dir / f"schedule_{name}.json", sched.to_json())
        print(f"{name}: {len(sched.steps)} steps, kernels={sched.kernels} banks={sched.banks}")
    return 0


def _approx_config(args) -> ApproxConfig:
    doc = {"schema_version": 1}
    if getattr(args, "approx_config", None):
        doc = _load_doc(args.approx_config, "approx")
    if getattr(args, "format", None):
        doc["format"] = args.format
    return _stage("approx", ApproxConfig.from_doc, doc)


def cmd_approx_report(args) -> int:
    cfg = _approx_config(args)
    out_dir = Path(args.out_dir)
    reports = []
    for fn in ("isqrt", "exp", "softmax", "gelu"):
        rep = _stage("approx", error_report, fn, cfg,
                     samples=args.samples, seed=args.seed, exact=args.exact)
        reports.append(rep)
        _write(out_dir / f"approx_{fn}.json", rep.to_json())
        print(f"{fn}: max_abs={rep.max_abs:.3e} max_rel={rep.max_rel:.3e} "
              f"mean_abs={rep.mean_abs:.3e}")
    _write(out_dir / "approx_errors.csv", reports_to_csv(reports))
    return 0


def cmd_emit(args) -> int:
    try:
        manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise StageError("emit", f"cannot read manifest: {exc}") from exc
    params = _stage("emit", template_params_from_manifest, manifest)
    text = emit_template_params(params)
    out = Path(args.out) if args.out else Path(args.out_dir) / "template_params.env"
    _write(out, text)
    print(f"emitted {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vitmap",
        description="Map transformer models onto a tiled multi-kernel accelerator",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, hw=True):
        p.add_argument("--model", required=True,
                       help="model JSON path or preset (deit-tiny/small/base)")
        if hw:
            p.add_argument("--hw", required=True, help="hardware JSON path or preset (vu9p)")
        p.add_argument("--out-dir", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=0)

    def add_space(p):
        p.add_argument("--tn-cap", type=int, default=None)
        p.add_argument("--tm-cap", type=int, default=None)
        p.add_argument("--pn-cap", type=int, default=None)
        p.add_argument("--tn-step", type=int, default=1)
        p.add_argument("--tm-step", type=int, default=1)
        p.add_argument("--exhaustive-cap", type=int, default=1_000_000,
                       help="refuse exhaustive search above this many points")
        p.add_argument("--force", action="store_true",
                       help="run exhaustive search past the safety cap")
        p.add_argument("--no-fuse", dest="fuse", action="store_false",
                       help="disable QKV weight fusion")
        p.add_argument("--search-config", default=None, help="SearchConfig JSON file")
        p.add_argument("--set-size", type=int, default=None)
        p.add_argument("--iterations", type=int, default=None)
        p.add_argument("--preservation", type=int, default=None)
        p.add_argument("--max-evals", type=int, default=None)

    p = sub.add_parser("compile", help="full pipeline: parse, search, schedule, manifest")
    add_common(p)
    add_space(p)
    p.add_argument("--exhaustive", action="store_true",
                   help="use the exhaustive search instead of the heuristic")
    p.add_argument("--batch", type=int, default=None, help="override the model batch size")
    p.add_argument("--format", default=None, help="fixed-point format, e.g. Q8.8")
    p.add_argument("--approx-config", default=None, help="approximation config JSON")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("search", help="run and log the design-space searches")
    add_common(p)
    add_space(p)
    p.add_argument("--mode", choices=("exhaustive", "heuristic", "both"), default="both")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("schedule", help="emit static schedules and traces")
    add_common(p)
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("approx-report", help="measure approximation error vs oracles")
    p.add_argument("--out-dir", default="out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=1024)
    p.add_argument("--format", default=None, help="fixed-point format, e.g. Q4.4")
    p.add_argument("--approx-config", default=None)
    p.add_argument("--exact", action="store_true",
                   help="swap the oracle in for the approximation (zero-error check)")
    p.set_defaults(func=cmd_approx_report)

    p = sub.add_parser("emit", help="write template parameters from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=cmd_emit)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return STAGE_EXIT_CODES.get(exc.stage, 1)
    except VitmapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
