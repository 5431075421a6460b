"""Command-line surface: inject, cluster, grid, evaluate, report.

Exit codes: 0 success, 2 usage error (argparse), 3 data error, 4 stage
failure. Subcommands that take many flags also accept `--config FILE`
holding the same keys as the long flags, either as JSON or as `key = value`
INI lines; explicit flags win over the config file.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

from .clustering import load_assignment, write_assignment
from .data import FailureSet, load_manifest, write_manifest
from .errors import DataError, ParseError, RccError, StageError
from .faultgen import build_failure_corpus, load_keypoints, load_plan
from .metrics import build_report, report_to_dict
from .pipeline import (
    DbscanAuto,
    FileFeatures,
    Hdbscan,
    HuddHeatmaps,
    KMeansAuto,
    Pca,
    PipelineSpec,
    Umap,
    cell_summary,
    emit_rows,
    failure_subset,
    resolve_source,
    run_grid,
    run_pipeline,
)

DIMRED_CHOICES = {"none": lambda: None, "pca": Pca, "umap": Umap}
ALGO_CHOICES = {"kmeans": KMeansAuto, "dbscan": DbscanAuto, "hdbscan": Hdbscan}


def _load_config(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"config file not found: {p}")
    text = p.read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad JSON config {p.name}: {exc}") from None
        if not isinstance(raw, dict):
            raise ParseError(f"config {p.name} must be a JSON object")
        return {str(k): v for k, v in raw.items()}
    parser = configparser.ConfigParser()
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ParseError(f"bad config {p.name}: {exc}") from None
    merged = {}
    for section in ("config", *parser.sections()):
        if parser.has_section(section) or section == "config":
            merged.update(parser.items(section))
    return merged


def _merge_config(args, keys) -> None:
    """Fill unset (None) flag values from --config; flags always win."""
    if not getattr(args, "config", None):
        return
    values = _load_config(args.config)
    for key in keys:
        if getattr(args, key, None) is None and key in values:
            setattr(args, key, values[key])


def _require(args, names) -> None:
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"missing required argument(s): {flags}")


class UsageError(Exception):
    pass


def _feature_source(args):
    if getattr(args, "heatmaps", None):
        return HuddHeatmaps(str(args.heatmaps))
    if args.features:
        return FileFeatures(str(args.features))
    raise UsageError("one of --features or --heatmaps is required")


def _cmd_inject(args) -> int:
    d = load_manifest(args.manifest)
    keypoints = load_keypoints(args.keypoints) if args.keypoints else {}
    plan = load_plan(args.plan)
    out_dir = Path(args.out)
    combined = build_failure_corpus(d, args.images, keypoints, plan, out_dir)
    write_manifest(combined, out_dir / "manifest.csv")
    injected = sum(1 for r in combined.records if r.scenario)
    print(f"wrote {injected} injected images and manifest to {out_dir}")
    return 0


def _cmd_cluster(args) -> int:
    _merge_config(args, ("features", "heatmaps", "manifest", "dimred", "algo", "seed", "out"))
    _require(args, ("manifest", "out"))
    dimred = args.dimred or "none"
    algo = args.algo or "dbscan"
    if dimred not in DIMRED_CHOICES:
        raise UsageError(f"--dimred must be one of {sorted(DIMRED_CHOICES)}")
    if algo not in ALGO_CHOICES:
        raise UsageError(f"--algo must be one of {sorted(ALGO_CHOICES)}")
    spec = PipelineSpec(
        feature_source=_feature_source(args),
        dimred=DIMRED_CHOICES[dimred](),
        clusterer=ALGO_CHOICES[algo](),
        seed=int(args.seed or 0),
    )
    sub = failure_subset(load_manifest(args.manifest))
    fs = FailureSet(sub, resolve_source(spec.feature_source, sub))
    result = run_pipeline(spec, fs)
    write_assignment(result.assignment, args.out)
    print(
        f"{result.assignment.n_clusters} clusters, "
        f"{result.assignment.n_noise} noise points -> {args.out}"
    )
    return 0


def _cmd_grid(args) -> int:
    _merge_config(args, ("features", "manifest", "seed", "out", "jobs"))
    _require(args, ("features", "manifest", "out"))
    sources = [FileFeatures(p) for p in str(args.features).split(",") if p]
    if not sources:
        raise UsageError("--features needs at least one path")
    sub = failure_subset(load_manifest(args.manifest))
    fs = FailureSet(sub, resolve_source(sources[0], sub))
    cells = run_grid(sources, fs, seed=int(args.seed or 0), jobs=int(args.jobs or 1))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    assignments = out_dir / "assignments"
    assignments.mkdir(exist_ok=True)
    for i, cell in enumerate(cells):
        if cell.result:
            row = cell_summary(cell)
            name = f"cell{i:02d}_{row['dimred']}_{row['clusterer']}.csv"
            write_assignment(cell.result.assignment, assignments / name)
    emit_rows([cell_summary(c) for c in cells], "json", out_dir / "grid.json")
    failed = sum(1 for c in cells if c.error)
    print(f"{len(cells)} cells ({failed} failed) -> {out_dir / 'grid.json'}")
    return 0


def _cmd_evaluate(args) -> int:
    _merge_config(args, ("assignment", "manifest", "coverage_threshold", "out"))
    _require(args, ("assignment", "manifest", "out"))
    assignment = load_assignment(args.assignment)
    d = load_manifest(args.manifest)
    scenarios = {r.id: r.scenario for r in d.records}
    report = build_report(
        assignment, scenarios, threshold=float(args.coverage_threshold or 0.9)
    )
    payload = json.dumps(report_to_dict(report), indent=2, sort_keys=True)
    Path(args.out).write_text(payload + "\n", encoding="utf-8")
    print(f"report -> {args.out}")
    return 0


def _cmd_report(args) -> int:
    in_dir = Path(args.in_dir)
    grid_file = in_dir / "grid.json"
    if not grid_file.is_file():
        raise DataError(f"no grid.json under {in_dir}")
    try:
        rows = json.loads(grid_file.read_text(encoding="utf-8"))["pipelines"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise ParseError(f"bad grid file {grid_file}: {exc}") from None
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / f"pipelines.{args.format}"
    emit_rows(rows, args.format, target)
    print(f"{len(rows)} rows -> {target}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rccpipe",
        description="Root-cause clustering of DNN failures: corpus injection, "
        "pipeline runs, grid sweeps, and scoring.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inject", help="build a scenario-tagged failure corpus")
    p.add_argument("--manifest", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--keypoints")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_inject)

    p = sub.add_parser("cluster", help="run one pipeline, write the assignment")
    p.add_argument("--features")
    p.add_argument("--heatmaps")
    p.add_argument("--manifest")
    p.add_argument("--dimred", choices=sorted(DIMRED_CHOICES))
    p.add_argument("--algo", choices=sorted(ALGO_CHOICES))
    p.add_argument("--seed")
    p.add_argument("--out")
    p.add_argument("--config")
    p.set_defaults(fn=_cmd_cluster)

    p = sub.add_parser("grid", help="run the full source x dimred x algo grid")
    p.add_argument("--features", help="comma-separated feature files")
    p.add_argument("--manifest")
    p.add_argument("--seed")
    p.add_argument("--out")
    p.add_argument("--jobs")
    p.add_argument("--config")
    p.set_defaults(fn=_cmd_grid)

    p = sub.add_parser("evaluate", help="score an assignment against a manifest")
    p.add_argument("--assignment")
    p.add_argument("--manifest")
    p.add_argument("--coverage-threshold", dest="coverage_threshold")
    p.add_argument("--out")
    p.add_argument("--config")
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("report", help="re-emit grid results as CSV or JSON tables")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RccError as exc:
        # Anything raised inside a pipeline stage carries .stage; standalone
        # StageErrors (degenerate clustering inputs and so on) count too.
        stage = getattr(exc, "stage", None)
        if stage is not None or isinstance(exc, StageError):
            where = f" in stage {stage!r}" if stage else ""
            print(f"stage failure{where}: {exc}", file=sys.stderr)
            return 4
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
