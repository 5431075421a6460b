"""Pipeline composition: feature source, optional reduction, self-tuning
clustering, scoring, and the 3 x 3 grid sweep.

A PipelineSpec picks exactly one option per stage. `run_pipeline` executes
the stages in order on a failure set and is fully deterministic given the
spec's seed: each randomized stage works from a sub-seed derived from the
master seed and the stage name, never from global state. `run_grid`
enumerates every (source, reduction, clusterer) cell with per-cell derived
seeds, so results are independent of execution order and of how many worker
processes run the cells.
"""

from __future__ import annotations

import dataclasses
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .clustering import (
    DEFAULT_K_RANGE,
    DEFAULT_MIN_PTS_RANGE,
    ClusterAssignment,
    kmeans,
    select_eps,
    select_k,
    select_min_pts,
)
from .data import Dataset, FailureSet, FeatureMatrix, is_failure, load_feature_matrix
from .dimred import UmapParams, pca_fit_transform, umap_fit_transform
from .errors import DataError, IoError, RccError
from .hdbscan import hdbscan
from .heatmap import load_heatmaps, select_layer
from .metrics import EvaluationReport, build_report, report_to_dict
from .seeding import derive_seed

# -- stage choices -----------------------------------------------------------


@dataclass(frozen=True)
class FileFeatures:
    """Feature rows from an existing matrix file (binary or CSV)."""

    path: str


@dataclass(frozen=True)
class HuddHeatmaps:
    """Flattened heatmaps of the tightest layer in a saved heatmap directory."""

    path: str


@dataclass(frozen=True)
class RawPixels:
    """Center-cropped grayscale thumbnails, `side` x `side`, flattened.

    A model-free source so the full loop runs anywhere; its rows carry far
    less signal than learned features and reports label it accordingly.
    """

    side: int = 32
    images_dir: str = "."

    def __post_init__(self):
        if self.side < 2:
            raise DataError(f"pixel side must be >= 2, got {self.side}")


@dataclass(frozen=True)
class Pca:
    n_components: int = 10


@dataclass(frozen=True)
class Umap:
    params: UmapParams = field(default_factory=UmapParams)


@dataclass(frozen=True)
class KMeansAuto:
    k_range: range = DEFAULT_K_RANGE


@dataclass(frozen=True)
class DbscanAuto:
    min_pts_range: range = DEFAULT_MIN_PTS_RANGE


@dataclass(frozen=True)
class Hdbscan:
    min_cluster_size: int = 5


FEATURE_SOURCES = (FileFeatures, HuddHeatmaps, RawPixels)
DIMREDS = (type(None), Pca, Umap)
CLUSTERERS = (KMeansAuto, DbscanAuto, Hdbscan)


@dataclass(frozen=True)
class PipelineSpec:
    """One fully-specified pipeline; dimred None means no reduction."""

    feature_source: object
    dimred: object
    clusterer: object
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.feature_source, FEATURE_SOURCES):
            raise DataError(f"unknown feature source {self.feature_source!r}")
        if not isinstance(self.dimred, DIMREDS):
            raise DataError(f"unknown dimred choice {self.dimred!r}")
        if not isinstance(self.clusterer, CLUSTERERS):
            raise DataError(f"unknown clusterer {self.clusterer!r}")
        if self.seed < 0:
            raise DataError(f"seed must be >= 0, got {self.seed}")


@dataclass(frozen=True)
class PipelineResult:
    spec: PipelineSpec
    assignment: ClusterAssignment
    report: EvaluationReport
    timings: tuple  # of (stage name, seconds), in execution order


@dataclass(frozen=True)
class GridCell:
    """One grid entry; exactly one of result / error is set."""

    spec: PipelineSpec
    result: PipelineResult | None
    error: str | None


# -- labels (used for sorting, sub-seeds, and report rows) -------------------


def source_label(source) -> str:
    if isinstance(source, FileFeatures):
        return f"features:{source.path}"
    if isinstance(source, HuddHeatmaps):
        return f"heatmaps:{source.path}"
    return f"pixels:{source.side}"


def dimred_label(dimred) -> str:
    if dimred is None:
        return "none"
    if isinstance(dimred, Pca):
        return f"pca{dimred.n_components}"
    return "umap"


def clusterer_label(clusterer) -> str:
    if isinstance(clusterer, KMeansAuto):
        return "kmeans"
    if isinstance(clusterer, DbscanAuto):
        return "dbscan"
    return "hdbscan"


def _cell_key(spec: PipelineSpec) -> tuple:
    return (
        source_label(spec.feature_source),
        dimred_label(spec.dimred),
        clusterer_label(spec.clusterer),
    )


# -- failure selection -------------------------------------------------------


def failure_subset(d: Dataset) -> Dataset:
    """The failure-inducing records: predictions that miss, plus every
    scenario-tagged record. Injected images keep the original (correct)
    prediction because re-running the model happens outside this package, so
    their tag is what marks them failure-inducing."""
    ids = [r.id for r in d.records if r.scenario or is_failure(r, d.task)]
    if not ids:
        raise DataError("dataset contains no failure-inducing records")
    return d.restrict(ids)


def select_failures(d: Dataset, features: FeatureMatrix) -> FailureSet:
    """Failure subset of `d` paired with its feature rows; `features` may
    cover any superset of the failing ids."""
    sub = failure_subset(d)
    return FailureSet(sub, features.restrict(sub.ids))


# -- stage execution ---------------------------------------------------------


def resolve_source(source, d: Dataset) -> FeatureMatrix:
    """Feature rows for every record of `d`, in dataset order."""
    if isinstance(source, FileFeatures):
        return load_feature_matrix(source.path).restrict(d.ids)
    if isinstance(source, HuddHeatmaps):
        _, matrix = select_layer(load_heatmaps(source.path))
        return matrix.restrict(d.ids)
    rows = []
    for record in d.records:
        path = Path(source.images_dir) / (record.path or f"{record.id}.png")
        if not path.is_file():
            raise DataError(f"image for {record.id!r} not found: {path}")
        with Image.open(path) as im:
            gray = im.convert("L")
            short = min(gray.size)
            left = (gray.width - short) // 2
            top = (gray.height - short) // 2
            crop = gray.crop((left, top, left + short, top + short))
            thumb = crop.resize((source.side, source.side), Image.BILINEAR)
        rows.append(np.asarray(thumb, dtype=np.float64).ravel() / 255.0)
    return FeatureMatrix(d.ids, np.vstack(rows))


def _timed(timings, stage, fn):
    start = time.perf_counter()
    try:
        value = fn()
    except RccError as exc:
        exc.stage = stage
        raise
    timings.append((stage, time.perf_counter() - start))
    return value


def _reduce(dimred, x: FeatureMatrix, seed: int) -> FeatureMatrix:
    if dimred is None:
        return x
    if isinstance(dimred, Pca):
        embedding, _ = pca_fit_transform(x, dimred.n_components)
        return embedding
    params = dataclasses.replace(dimred.params, seed=seed)
    return umap_fit_transform(x, params)


def _cluster(clusterer, x: FeatureMatrix, seed: int) -> ClusterAssignment:
    if isinstance(clusterer, KMeansAuto):
        k = select_k(x, clusterer.k_range, seed=seed)
        assignment, _ = kmeans(x, k, seed=seed)
        return assignment
    if isinstance(clusterer, DbscanAuto):
        eps = select_eps(x)
        _, assignment = select_min_pts(x, eps, clusterer.min_pts_range)
        return assignment
    return hdbscan(x, clusterer.min_cluster_size)


def run_pipeline(spec: PipelineSpec, fs: FailureSet) -> PipelineResult:
    """Execute one pipeline on a failure set.

    Features are resolved from `spec.feature_source` and restricted to the
    failure set's ids (the set's own matrix is not consulted, so the same
    failure set serves every source in a grid). Stage sub-seeds come from
    spec.seed and the stage name; any stage error is re-raised with a
    `.stage` attribute naming the stage that failed.
    """
    if not fs.dataset.records:
        raise DataError("failure set is empty")
    timings: list = []
    x = _timed(timings, "features", lambda: resolve_source(spec.feature_source, fs.dataset))
    x = _timed(
        timings, "dimred", lambda: _reduce(spec.dimred, x, derive_seed(spec.seed, "dimred"))
    )
    assignment = _timed(
        timings, "cluster", lambda: _cluster(spec.clusterer, x, derive_seed(spec.seed, "cluster"))
    )
    scenarios = {r.id: r.scenario for r in fs.dataset.records}
    report = _timed(timings, "metrics", lambda: build_report(assignment, scenarios))
    return PipelineResult(spec, assignment, report, tuple(timings))


# -- the grid ----------------------------------------------------------------


def grid_specs(sources, seed: int) -> list:
    """Every (source, dimred, clusterer) cell with its derived sub-seed,
    in canonical (source, dimred, clusterer) label order."""
    if not sources:
        raise DataError("grid needs at least one feature source")
    specs = []
    for source in sources:
        for dimred in (None, Pca(), Umap()):
            for clusterer in (KMeansAuto(), DbscanAuto(), Hdbscan()):
                cell_seed = derive_seed(
                    seed,
                    source_label(source),
                    dimred_label(dimred),
                    clusterer_label(clusterer),
                )
                specs.append(PipelineSpec(source, dimred, clusterer, cell_seed))
    specs.sort(key=_cell_key)
    return specs


def _run_cell(spec: PipelineSpec, fs: FailureSet) -> GridCell:
    try:
        return GridCell(spec, run_pipeline(spec, fs), None)
    except RccError as exc:
        stage = getattr(exc, "stage", "setup")
        return GridCell(spec, None, f"{stage}: {exc}")


def run_grid(sources, fs: FailureSet, seed: int, jobs: int = 1) -> list:
    """Run all cells; failures are recorded in their cell, never raised.

    With jobs > 1 cells run in separate processes; every cell's seed is a
    function of the master seed and the cell's labels alone, so the outcome
    matches a sequential run cell for cell.
    """
    specs = grid_specs(sources, seed)
    if jobs < 1:
        raise DataError(f"jobs must be >= 1, got {jobs}")
    if jobs == 1 or len(specs) == 1:
        return [_run_cell(spec, fs) for spec in specs]
    with ProcessPoolExecutor(max_workers=min(jobs, len(specs))) as pool:
        return list(pool.map(_run_cell, specs, [fs] * len(specs)))


# -- report emission ---------------------------------------------------------

CSV_COLUMNS = (
    "source",
    "dimred",
    "clusterer",
    "seed",
    "status",
    "n_clusters",
    "n_noise",
    "avg_purity",
    "coverage_pct",
    "covered_scenarios",
    "redundancy_ratio",
    "savings",
    "seconds",
    "error",
)


def cell_summary(cell: GridCell) -> dict:
    """All reportable facts of one cell as plain JSON-ready values."""
    spec = cell.spec
    row = {
        "source": source_label(spec.feature_source),
        "dimred": dimred_label(spec.dimred),
        "clusterer": clusterer_label(spec.clusterer),
        "seed": spec.seed,
        "status": "ok" if cell.result else "failed",
        "error": cell.error,
        "n_clusters": None,
        "n_noise": None,
        "avg_purity": None,
        "coverage_pct": None,
        "covered_scenarios": [],
        "redundancy_ratio": None,
        "savings": None,
        "seconds": None,
        "report": None,
    }
    if cell.result:
        report = cell.result.report
        row.update(
            n_clusters=cell.result.assignment.n_clusters,
            n_noise=cell.result.assignment.n_noise,
            avg_purity=report.avg_purity,
            coverage_pct=report.coverage_pct,
            covered_scenarios=list(report.covered_scenarios),
            redundancy_ratio=report.redundancy_ratio,
            savings=report.savings,
            seconds=sum(s for _, s in cell.result.timings),
            report=report_to_dict(report),
        )
    return row


def _csv_value(name: str, value) -> str:
    if value is None:
        return ""
    if name == "covered_scenarios":
        return ";".join(value)
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def emit_rows(rows, format: str, path) -> None:
    """Write summary rows (sorted by source, dimred, clusterer) as a CSV
    table or a JSON document; a second emission of the same rows is
    byte-identical."""
    rows = sorted(rows, key=lambda r: (r["source"], r["dimred"], r["clusterer"]))
    path = Path(path)
    try:
        if format == "json":
            payload = json.dumps({"pipelines": rows}, indent=2, sort_keys=True)
            path.write_text(payload + "\n", encoding="utf-8")
        elif format == "csv":
            lines = [",".join(CSV_COLUMNS)]
            for row in rows:
                lines.append(
                    ",".join(_csv_value(c, row[c]).replace(",", ";") for c in CSV_COLUMNS)
                )
            path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        else:
            raise DataError(f"unknown report format {format!r}")
    except OSError as exc:
        raise IoError(f"cannot write report {path}: {exc}") from None


def emit_report(cells, format: str, path) -> None:
    if not cells:
        raise DataError("nothing to report")
    emit_rows([cell_summary(c) for c in cells], format, path)
