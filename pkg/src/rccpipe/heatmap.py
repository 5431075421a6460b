"""Per-layer relevance-heatmap features: normalization, distances, ICD/WICD,
and minimal-WICD layer selection.

Heatmaps arrive from an external relevance-propagation tool as one matrix per
(image, layer). This module does not compute them; it normalizes each layer
globally across the image collection (min-max to [0, 1], so heatmaps from
different images are comparable), measures Frobenius distances between
normalized heatmaps, scores clusterings by weighted average intra-cluster
distance (WICD), and picks the layer whose clustering is tightest.

Flattening is row-major: entry (i, j) of an N x M heatmap lands at column
i * M + j of the corresponding feature row.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clustering import (
    ClusterAssignment,
    KneeInput,
    _ward_merge_sequence,
    hac_ward,
    knee_point,
)
from .data import FeatureMatrix, load_feature_matrix, write_feature_matrix
from .errors import (
    ConstantCurveError,
    DataError,
    DimensionMismatchError,
    DuplicateIdError,
    EmptyAssignmentError,
    IoError,
    LayerNotFoundError,
    NonFiniteValueError,
)


@dataclass(frozen=True)
class HeatmapStack:
    """All per-layer heatmaps for one image, in a fixed layer order."""

    image_id: str
    layers: tuple

    def __post_init__(self):
        if not self.image_id:
            raise DataError("image_id must be non-empty")
        seen = set()
        frozen = []
        for entry in self.layers:
            try:
                name, matrix = entry
            except (TypeError, ValueError):
                raise DataError("layers must be (name, matrix) pairs") from None
            if not name:
                raise DataError("layer name must be non-empty")
            if name in seen:
                raise DataError(f"duplicate layer name: {name!r}")
            seen.add(name)
            m = np.array(matrix, dtype=np.float64)
            if m.ndim != 2 or m.size == 0:
                raise DataError(f"layer {name!r}: heatmap must be a non-empty matrix")
            if not np.isfinite(m).all():
                row, col = np.argwhere(~np.isfinite(m))[0]
                raise NonFiniteValueError(int(row), int(col))
            m.setflags(write=False)
            frozen.append((name, m))
        if not frozen:
            raise DataError("a heatmap stack needs at least one layer")
        object.__setattr__(self, "layers", tuple(frozen))

    @property
    def layer_names(self):
        return tuple(name for name, _ in self.layers)

    def layer(self, name: str) -> np.ndarray:
        for layer_name, matrix in self.layers:
            if layer_name == name:
                return matrix
        raise LayerNotFoundError(name)


def _check_collection(stacks):
    stacks = list(stacks)
    if not stacks:
        raise DataError("empty heatmap collection")
    names = stacks[0].layer_names
    shapes = tuple(m.shape for _, m in stacks[0].layers)
    seen = set()
    for s in stacks:
        if s.image_id in seen:
            raise DuplicateIdError(s.image_id)
        seen.add(s.image_id)
        if s.layer_names != names:
            raise DataError(
                f"image {s.image_id!r}: layer names {s.layer_names} differ "
                f"from {names}"
            )
        for (name, m), shape in zip(s.layers, shapes):
            if m.shape != shape:
                raise DimensionMismatchError(
                    f"image {s.image_id!r}, layer {name!r}: shape {m.shape} "
                    f"differs from {shape}"
                )
    return stacks, names


def normalize_heatmaps(stacks, layer: str) -> np.ndarray:
    """(N, rows, cols) array of one layer's heatmaps mapped to [0, 1].

    Min and max are taken globally over every image's entries for the layer,
    not per image; a constant layer normalizes to all zeros.
    """
    stacks, _ = _check_collection(stacks)
    mats = np.stack([s.layer(layer) for s in stacks])
    lo, hi = mats.min(), mats.max()
    if hi == lo:
        return np.zeros_like(mats)
    return (mats - lo) / (hi - lo)


def heatmap_distance(a, b) -> float:
    """Frobenius distance between two equal-shaped heatmaps."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shapes {a.shape} and {b.shape} differ")
    return float(np.sqrt(((a - b) ** 2).sum()))


def icd(cluster_matrices) -> float:
    """Mean heatmap distance over unordered pairs; singletons count as 0.

    A one-image cluster has no pairs to average (the defining sum divides by
    C(n, 2) = 0); it is treated as perfectly cohesive.
    """
    mats = list(cluster_matrices)
    if len(mats) < 2:
        return 0.0
    total = 0.0
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            total += heatmap_distance(mats[i], mats[j])
    return total / (len(mats) * (len(mats) - 1) / 2)


def wicd(assignment: ClusterAssignment, matrices_by_id) -> float:
    """Size-weighted average ICD over clusters, divided by the cluster count.

    ``matrices_by_id`` maps image id to that image's (normalized) heatmap and
    must cover every clustered id; noise ids are ignored.
    """
    if assignment.n_clusters == 0:
        raise EmptyAssignmentError("assignment has no clusters")
    members = {}
    for id_, label in zip(assignment.ids, assignment.labels):
        if label >= 0:
            members.setdefault(label, []).append(id_)
    missing = [i for ids in members.values() for i in ids if i not in matrices_by_id]
    if missing:
        raise DataError(f"no heatmap for clustered ids: {missing[:5]}")
    total = sum(len(ids) for ids in members.values())
    weighted = sum(
        icd([matrices_by_id[i] for i in ids]) * len(ids) / total
        for ids in members.values()
    )
    return weighted / len(members)


def _layer_features(stacks, layer: str) -> FeatureMatrix:
    normalized = normalize_heatmaps(stacks, layer)
    ids = tuple(s.image_id for s in stacks)
    return FeatureMatrix(ids, normalized.reshape(len(ids), -1))


def _pick_cluster_count(features: FeatureMatrix) -> int:
    """Cluster count from the knee of the ascending Ward merge-cost curve.

    The knee marks the last merge worth performing; every later (costlier)
    merge is skipped. Degenerate curves (constant costs, or too few merges
    for a knee) fall back to two clusters.
    """
    n = features.n
    merges = _ward_merge_sequence(features.values.copy())
    costs = [cost for _, _, cost in merges]
    if len(costs) < 3:
        return min(2, n)
    try:
        idx = knee_point(KneeInput(tuple(range(len(costs))), tuple(costs)))
    except ConstantCurveError:
        return min(2, n)
    return max(n - idx - 1, 2)


def select_layer(stacks):
    """(layer_name, features) for the layer whose clustering is tightest.

    Per layer: normalize globally, flatten row-major, cluster with Ward
    agglomeration at the merge-cost-knee cluster count, and score with WICD
    over the normalized heatmaps. The minimal-WICD layer wins; ties go to
    the earliest layer in stack order.
    """
    stacks, names = _check_collection(stacks)
    if len(stacks) < 2:
        raise DataError("layer selection needs at least two images")
    best = None
    for layer_name in names:
        features = _layer_features(stacks, layer_name)
        normalized = normalize_heatmaps(stacks, layer_name)
        by_id = {s.image_id: m for s, m in zip(stacks, normalized)}
        assignment = hac_ward(features, _pick_cluster_count(features))
        score = wicd(assignment, by_id)
        if best is None or score < best[0]:
            best = (score, layer_name, features)
    _, layer_name, features = best
    return layer_name, features


# -- on-disk format -------------------------------------------------------
#
# A heatmap collection is a directory: one FMX1 file per layer holding the
# flattened (row-major) heatmaps, plus index.json recording layer order,
# per-layer dimensions, file names, and the shared image-id order.


def save_heatmaps(stacks, directory) -> None:
    stacks, names = _check_collection(stacks)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ids = [s.image_id for s in stacks]
    index = {"layers": [], "ids": ids}
    for pos, layer_name in enumerate(names):
        rows, cols = stacks[0].layer(layer_name).shape
        flat = np.stack([s.layer(layer_name) for s in stacks]).reshape(
            len(stacks), -1
        )
        file_name = f"layer_{pos:02d}.fmx"
        write_feature_matrix(FeatureMatrix(tuple(ids), flat), directory / file_name)
        index["layers"].append(
            {"name": layer_name, "rows": rows, "cols": cols, "file": file_name}
        )
    (directory / "index.json").write_text(json.dumps(index, indent=2))


def load_heatmaps(directory):
    directory = Path(directory)
    index_path = directory / "index.json"
    if not index_path.is_file():
        raise IoError(f"no heatmap index at {index_path}")
    try:
        index = json.loads(index_path.read_text())
        ids = list(index["ids"])
        layer_specs = list(index["layers"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise IoError(f"malformed heatmap index {index_path}: {exc}") from None
    per_layer = []
    for spec in layer_specs:
        matrix = load_feature_matrix(directory / spec["file"])
        if list(matrix.ids) != ids:
            raise DataError(
                f"layer {spec['name']!r}: ids disagree with the index"
            )
        rows, cols = int(spec["rows"]), int(spec["cols"])
        if matrix.m != rows * cols:
            raise DimensionMismatchError(
                f"layer {spec['name']!r}: {matrix.m} values per row, "
                f"expected {rows}x{cols}"
            )
        per_layer.append(
            (spec["name"], matrix.values.reshape(len(ids), rows, cols))
        )
    return [
        HeatmapStack(
            image_id=id_,
            layers=tuple((name, mats[i]) for name, mats in per_layer),
        )
        for i, id_ in enumerate(ids)
    ]
