"""Datasets, feature matrices, and the on-disk formats that carry them.

A dataset is an ordered list of image records (id, optional path, true and
predicted outputs, optional injected-scenario tag) plus a task that says how
outputs are compared. ``label_failures`` applies the task's failure rule;
``make_failure_set`` pairs the failing records with their feature rows.

File formats:

* Manifest: CSV with header ``id,path,true,pred,scenario``. For regression
  tasks ``true``/``pred`` are semicolon-separated reals. A JSON sidecar next
  to the manifest (same stem, ``.json``) names the task::

      {"task": "classification"}
      {"task": "regression", "metric": "squared_error", "threshold": 0.18}

  Without a sidecar the task defaults to classification.
* Feature CSV: header ``id,f0,...,f{M-1}``, one row per image.
* FMX1 binary: magic bytes ``FMX1``; u64 LE row count N; u64 LE column count
  M; N*M IEEE-754 LE f64 values row-major; then N ids, each a u32 LE byte
  length followed by UTF-8 text.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import (
    DataError,
    DuplicateIdError,
    IoError,
    MissingFileError,
    MixedOutputKindsError,
    NonFiniteValueError,
    ParseError,
    RaggedRowError,
)

MANIFEST_HEADER = ("id", "path", "true", "pred", "scenario")

SQUARED_ERROR = "squared_error"
POINT_DISTANCE = "point_distance"

Output = Union[str, tuple]


@dataclass(frozen=True)
class Classification:
    """Task whose outputs are class labels; any mismatch is a failure."""


@dataclass(frozen=True)
class Regression:
    """Task whose outputs are numeric vectors compared against a threshold.

    metric is ``squared_error`` (sum of squared component differences) or
    ``point_distance`` (outputs are flattened x,y pairs; the largest
    per-point Euclidean distance is compared).
    """

    threshold: float
    metric: str = SQUARED_ERROR

    def __post_init__(self):
        if not (self.threshold > 0):
            raise DataError(f"regression threshold must be > 0, got {self.threshold}")
        if self.metric not in (SQUARED_ERROR, POINT_DISTANCE):
            raise DataError(f"unknown regression metric: {self.metric!r}")


Task = Union[Classification, Regression]


def _is_vector(value) -> bool:
    return not isinstance(value, str)


@dataclass(frozen=True)
class ImageRecord:
    id: str
    true_output: Output
    predicted_output: Output
    path: str = ""
    scenario: str = ""  # empty = pre-existing / unknown origin

    def __post_init__(self):
        if not self.id:
            raise DataError("image id must be nonempty")
        if _is_vector(self.true_output):
            object.__setattr__(self, "true_output", tuple(float(v) for v in self.true_output))
        if _is_vector(self.predicted_output):
            object.__setattr__(
                self, "predicted_output", tuple(float(v) for v in self.predicted_output)
            )
        t, p = self.true_output, self.predicted_output
        if _is_vector(t) != _is_vector(p):
            raise MixedOutputKindsError(
                f"record {self.id!r}: true and predicted outputs differ in kind"
            )
        if _is_vector(t) and len(t) != len(p):
            raise MixedOutputKindsError(
                f"record {self.id!r}: output vectors differ in length ({len(t)} vs {len(p)})"
            )
        if _is_vector(t):
            for v in (*t, *p):
                if not math.isfinite(v):
                    raise DataError(f"record {self.id!r}: non-finite output value")


@dataclass(frozen=True)
class Dataset:
    records: tuple
    task: Task

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = set()
        for r in self.records:
            if r.id in seen:
                raise DuplicateIdError(r.id)
            seen.add(r.id)
            want_vector = isinstance(self.task, Regression)
            if _is_vector(r.true_output) != want_vector:
                raise MixedOutputKindsError(
                    f"record {r.id!r} output kind does not match the task"
                )
            if (
                isinstance(self.task, Regression)
                and self.task.metric == POINT_DISTANCE
                and len(r.true_output) % 2 != 0
            ):
                raise DataError(
                    f"record {r.id!r}: point-distance outputs need an even "
                    f"number of coordinates"
                )

    @property
    def ids(self) -> tuple:
        return tuple(r.id for r in self.records)

    def by_id(self, id_: str) -> ImageRecord:
        for r in self.records:
            if r.id == id_:
                return r
        raise KeyError(id_)

    def restrict(self, ids: Iterable[str]) -> "Dataset":
        """Subset keeping this dataset's record order."""
        keep = set(ids)
        return Dataset(tuple(r for r in self.records if r.id in keep), self.task)


@dataclass(frozen=True)
class FeatureMatrix:
    """N image ids and an N x M matrix of finite reals (float64, read-only)."""

    ids: tuple
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        vals = np.array(self.values, dtype=np.float64, copy=True)
        if vals.ndim != 2:
            raise DataError(f"feature matrix must be 2-D, got shape {vals.shape}")
        n, m = vals.shape
        if n < 1 or m < 1:
            raise DataError(f"feature matrix must be at least 1x1, got {n}x{m}")
        if n != len(self.ids):
            raise DataError(f"{len(self.ids)} ids for {n} rows")
        seen = set()
        for i in self.ids:
            if i in seen:
                raise DuplicateIdError(i)
            seen.add(i)
        bad = np.argwhere(~np.isfinite(vals))
        if bad.size:
            raise NonFiniteValueError(int(bad[0, 0]), int(bad[0, 1]))
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def row_index(self) -> dict:
        return {id_: i for i, id_ in enumerate(self.ids)}

    def restrict(self, ids: Sequence[str]) -> "FeatureMatrix":
        """Rows for exactly `ids`, in the given order."""
        index = self.row_index()
        try:
            rows = [index[i] for i in ids]
        except KeyError as exc:
            raise DataError(f"no feature row for id {exc.args[0]!r}") from None
        return FeatureMatrix(tuple(ids), self.values[rows])


@dataclass(frozen=True)
class FailureSet:
    """A dataset restricted to failing records, with aligned feature rows."""

    dataset: Dataset
    features: FeatureMatrix

    def __post_init__(self):
        if self.features.ids != self.dataset.ids:
            raise DataError("feature ids do not match dataset records in order")


# -- manifest I/O --------------------------------------------------------


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def _load_task(manifest_path: Path) -> Task:
    sidecar = _sidecar_path(manifest_path)
    if not sidecar.is_file():
        return Classification()
    try:
        spec = json.loads(sidecar.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"bad task sidecar {sidecar.name}: {exc}") from None
    kind = spec.get("task")
    if kind == "classification":
        return Classification()
    if kind == "regression":
        try:
            return Regression(
                threshold=float(spec["threshold"]),
                metric=spec.get("metric", SQUARED_ERROR),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad task sidecar {sidecar.name}: {exc}") from None
    raise ParseError(f"bad task sidecar {sidecar.name}: unknown task {kind!r}")


def _parse_vector(text: str, lineno: int) -> tuple:
    parts = text.split(";")
    try:
        vec = tuple(float(tok) for tok in parts)
    except ValueError:
        raise ParseError(f"expected semicolon-separated reals, got {text!r}", lineno)
    if not all(math.isfinite(v) for v in vec):
        raise ParseError(f"non-finite output value in {text!r}", lineno)
    return vec


def load_manifest(path) -> Dataset:
    """Read a manifest CSV (plus optional task sidecar) into a Dataset."""
    p = Path(path)
    if not p.is_file():
        raise MissingFileError(f"manifest not found: {p}")
    task = _load_task(p)
    want_vector = isinstance(task, Regression)
    records = []
    with open(p, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != MANIFEST_HEADER:
            raise ParseError(
                f"manifest header must be {','.join(MANIFEST_HEADER)}", line=1
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise ParseError(f"expected 5 fields, got {len(row)}", lineno)
            id_, img_path, true_s, pred_s, scenario = row
            if want_vector:
                true_o: Output = _parse_vector(true_s, lineno)
                pred_o: Output = _parse_vector(pred_s, lineno)
            else:
                true_o, pred_o = true_s, pred_s
            records.append(
                ImageRecord(
                    id=id_,
                    true_output=true_o,
                    predicted_output=pred_o,
                    path=img_path,
                    scenario=scenario,
                )
            )
    return Dataset(tuple(records), task)


def _format_output(value: Output) -> str:
    if _is_vector(value):
        return ";".join(repr(v) for v in value)
    return value


def write_manifest(d: Dataset, path) -> None:
    """Write a Dataset as manifest CSV plus its task sidecar."""
    p = Path(path)
    try:
        with open(p, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(MANIFEST_HEADER)
            for r in d.records:
                writer.writerow(
                    [
                        r.id,
                        r.path,
                        _format_output(r.true_output),
                        _format_output(r.predicted_output),
                        r.scenario,
                    ]
                )
        if isinstance(d.task, Regression):
            spec = {
                "task": "regression",
                "metric": d.task.metric,
                "threshold": d.task.threshold,
            }
        else:
            spec = {"task": "classification"}
        _sidecar_path(p).write_text(json.dumps(spec) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write manifest {p}: {exc}") from None


# -- feature matrix I/O --------------------------------------------------

FMX1_MAGIC = b"FMX1"
_FMX1_HEADER = struct.Struct("<4sQQ")


def load_feature_matrix(path) -> FeatureMatrix:
    """Read a FeatureMatrix from CSV or FMX1; the format is sniffed."""
    p = Path(path)
    if not p.is_file():
        raise MissingFileError(f"feature file not found: {p}")
    with open(p, "rb") as fh:
        head = fh.read(4)
    if head == FMX1_MAGIC:
        return _load_fmx1(p)
    return _load_feature_csv(p)


def _load_fmx1(p: Path) -> FeatureMatrix:
    buf = p.read_bytes()
    if len(buf) < _FMX1_HEADER.size:
        raise ParseError(f"{p.name}: truncated FMX1 header")
    magic, n, m = _FMX1_HEADER.unpack_from(buf)
    if magic != FMX1_MAGIC:
        raise ParseError(f"{p.name}: bad FMX1 magic")
    if n < 1 or m < 1:
        raise ParseError(f"{p.name}: FMX1 declares empty matrix {n}x{m}")
    body = _FMX1_HEADER.size + n * m * 8
    if len(buf) < body:
        raise ParseError(f"{p.name}: truncated FMX1 value block")
    values = np.frombuffer(
        buf, dtype="<f8", count=n * m, offset=_FMX1_HEADER.size
    ).reshape(n, m)
    ids = []
    offset = body
    for _ in range(n):
        if offset + 4 > len(buf):
            raise ParseError(f"{p.name}: truncated FMX1 id table")
        (length,) = struct.unpack_from("<I", buf, offset)
        offset += 4
        if offset + length > len(buf):
            raise ParseError(f"{p.name}: truncated FMX1 id table")
        try:
            ids.append(buf[offset : offset + length].decode("utf-8"))
        except UnicodeDecodeError:
            raise ParseError(f"{p.name}: FMX1 id is not valid UTF-8")
        offset += length
    if offset != len(buf):
        raise ParseError(f"{p.name}: trailing bytes after FMX1 id table")
    return FeatureMatrix(tuple(ids), values)


def _load_feature_csv(p: Path) -> FeatureMatrix:
    with open(p, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "id" or len(header) < 2:
            raise ParseError(f"{p.name}: feature CSV header must be id,f0,...", line=1)
        m = len(header) - 1
        if header[1:] != [f"f{i}" for i in range(m)]:
            raise ParseError(f"{p.name}: feature CSV header must be id,f0,...", line=1)
        ids = []
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != m + 1:
                raise RaggedRowError(len(rows))
            ids.append(row[0])
            try:
                parsed = [float(tok) for tok in row[1:]]
            except ValueError:
                raise ParseError(f"{p.name}: non-numeric feature value", lineno)
            for col, v in enumerate(parsed):
                if not math.isfinite(v):
                    raise NonFiniteValueError(len(rows), col)
            rows.append(parsed)
    if not rows:
        raise ParseError(f"{p.name}: feature CSV has no data rows")
    return FeatureMatrix(tuple(ids), np.array(rows, dtype=np.float64))


def write_feature_matrix(matrix: FeatureMatrix, path, format: str = "fmx1") -> None:
    """Write a FeatureMatrix as `fmx1` (bit-exact) or `csv` (repr round-trip)."""
    if format not in ("fmx1", "csv"):
        raise DataError(f"unknown feature format: {format!r}")
    p = Path(path)
    try:
        if format == "fmx1":
            _write_fmx1(matrix, p)
        else:
            _write_feature_csv(matrix, p)
    except OSError as exc:
        raise IoError(f"cannot write {p}: {exc}") from None


def _write_fmx1(matrix: FeatureMatrix, p: Path) -> None:
    parts = [_FMX1_HEADER.pack(FMX1_MAGIC, matrix.n, matrix.m)]
    parts.append(np.ascontiguousarray(matrix.values, dtype="<f8").tobytes())
    for id_ in matrix.ids:
        raw = id_.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    p.write_bytes(b"".join(parts))


def _write_feature_csv(matrix: FeatureMatrix, p: Path) -> None:
    with open(p, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"f{i}" for i in range(matrix.m)])
        for id_, row in zip(matrix.ids, matrix.values):
            writer.writerow([id_] + [repr(float(v)) for v in row])


# -- failure labeling ----------------------------------------------------


def is_failure(record: ImageRecord, task: Task) -> bool:
    if isinstance(task, Classification):
        return record.predicted_output != record.true_output
    t = record.true_output
    pr = record.predicted_output
    if task.metric == SQUARED_ERROR:
        return sum((a - b) ** 2 for a, b in zip(pr, t)) > task.threshold
    # point_distance: outputs are flattened (x, y) pairs
    for i in range(0, len(t), 2):
        if math.hypot(pr[i] - t[i], pr[i + 1] - t[i + 1]) > task.threshold:
            return True
    return False


def label_failures(d: Dataset) -> list:
    """Ids of failing records, in dataset order.

    Classification fails on any mismatch; squared-error regression when the
    summed squared difference exceeds the threshold (strictly); point-distance
    regression when any predicted point is more than the threshold away from
    its ground-truth point.
    """
    return [r.id for r in d.records if is_failure(r, d.task)]


def make_failure_set(d: Dataset, features: FeatureMatrix) -> FailureSet:
    """Restrict a dataset to its failing records and align feature rows."""
    failing = label_failures(d)
    if not failing:
        raise DataError("no failing records in dataset")
    return FailureSet(d.restrict(failing), features.restrict(failing))
