"""Flat clustering with self-tuning parameter selection.

K-means (k-means++ seeding, restarted), DBSCAN, Ward agglomerative
clustering, silhouette scoring, knee-point detection on curves, and the
automated choices built from them: K by the knee of the SSD curve, eps by the
knee of the sorted nearest-neighbor distances, MinPts by the best silhouette.

All functions accept either a bare 2-D array or any object carrying ``ids``
and ``values`` (FeatureMatrix, Embedding). Cluster labels are integers >= 0,
noise is -1, and labels are always renumbered by first appearance in row
order, so equal partitions compare equal.

Distance conventions are pinned so that an independent quadratic reference
implementation reproduces results exactly: Euclidean metric, DBSCAN
neighborhoods are closed balls (d <= eps) that include the point itself,
MinPts counts the point itself, and border points join the cluster of their
lexicographically smallest core neighbor id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConstantCurveError,
    DataError,
    DuplicateIdError,
    KTooLargeError,
    NoValidConfigurationError,
    TooFewClustersError,
)
from .seeding import derive_seed, rng_for

NOISE = -1

DEFAULT_K_RANGE = range(5, 36)
DEFAULT_MIN_PTS_RANGE = range(3, 21)


@dataclass(frozen=True)
class ClusterAssignment:
    """Per-id cluster labels; >= 0 for clusters, -1 for noise.

    Cluster labels always form the contiguous range 0..C-1.
    """

    ids: tuple
    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        object.__setattr__(self, "labels", tuple(int(l) for l in self.labels))
        if len(self.ids) != len(self.labels):
            raise DataError(f"{len(self.ids)} ids for {len(self.labels)} labels")
        seen = set()
        for i in self.ids:
            if i in seen:
                raise DuplicateIdError(i)
            seen.add(i)
        fg = sorted({l for l in self.labels if l != NOISE})
        if any(l < NOISE for l in self.labels):
            raise DataError("labels must be >= -1")
        if fg != list(range(len(fg))):
            raise DataError(f"cluster labels not contiguous: {fg}")

    @property
    def n_clusters(self) -> int:
        return max((l for l in self.labels if l != NOISE), default=-1) + 1

    @property
    def n_noise(self) -> int:
        return sum(1 for l in self.labels if l == NOISE)

    def clusters(self) -> dict:
        """label -> list of member ids, in row order."""
        out: dict = {}
        for id_, l in zip(self.ids, self.labels):
            if l != NOISE:
                out.setdefault(l, []).append(id_)
        return out


def write_assignment(a: ClusterAssignment, path) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "cluster"])
        for id_, l in zip(a.ids, a.labels):
            w.writerow([id_, l])


def load_assignment(path) -> ClusterAssignment:
    import csv

    from .errors import MissingFileError, ParseError
    from pathlib import Path

    p = Path(path)
    if not p.is_file():
        raise MissingFileError(f"assignment not found: {p}")
    ids, labels = [], []
    with open(p, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["id", "cluster"]:
            raise ParseError(f"{p.name}: assignment header must be id,cluster", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(f"{p.name}: expected 2 fields", lineno)
            try:
                labels.append(int(row[1]))
            except ValueError:
                raise ParseError(f"{p.name}: bad cluster label {row[1]!r}", lineno)
            ids.append(row[0])
    return ClusterAssignment(tuple(ids), tuple(labels))


# -- shared helpers -------------------------------------------------------


def _points(x):
    """(ids, float64 N x M array) from a FeatureMatrix-like or a bare array."""
    if hasattr(x, "ids") and hasattr(x, "values"):
        return tuple(x.ids), np.asarray(x.values, dtype=np.float64)
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DataError(f"expected a 2-D point array, got shape {arr.shape}")
    return tuple(f"p{i:06d}" for i in range(arr.shape[0])), arr


def pairwise_sq_dists(points: np.ndarray) -> np.ndarray:
    """Full symmetric matrix of squared Euclidean distances, zero diagonal."""
    pts = points - points.mean(axis=0)  # centering improves conditioning
    sq = np.einsum("ij,ij->i", pts, pts)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (pts @ pts.T)
    np.maximum(d2, 0.0, out=d2)
    d2 = (d2 + d2.T) * 0.5
    np.fill_diagonal(d2, 0.0)
    return d2


def canonical_labels(labels) -> list:
    """Renumber clusters by first appearance in row order; noise stays -1."""
    mapping: dict = {}
    out = []
    for l in labels:
        if l == NOISE:
            out.append(NOISE)
            continue
        if l not in mapping:
            mapping[l] = len(mapping)
        out.append(mapping[l])
    return out


# -- knee point -----------------------------------------------------------


@dataclass(frozen=True)
class KneeInput:
    xs: tuple
    ys: tuple

    def __post_init__(self):
        object.__setattr__(self, "xs", tuple(float(v) for v in self.xs))
        object.__setattr__(self, "ys", tuple(float(v) for v in self.ys))
        if len(self.xs) != len(self.ys):
            raise DataError("xs and ys must have equal length")
        if len(self.xs) < 3:
            raise DataError("knee detection needs at least 3 points")
        if any(b <= a for a, b in zip(self.xs, self.xs[1:])):
            raise DataError("xs must be strictly increasing")


def knee_point(curve: KneeInput, smooth_window: int = 1) -> int:
    """Index of the curve point deviating most from the endpoint chord.

    Both axes are min-max normalized first; an optional centered moving
    average (window w, 1 = none) smooths ys. Ties resolve to the smallest
    index. A constant ys curve has no knee.
    """
    xs = np.array(curve.xs)
    ys = np.array(curve.ys, dtype=np.float64)
    if np.all(ys == ys[0]):
        raise ConstantCurveError("ys are constant; curve has no knee")
    if smooth_window > 1:
        half = smooth_window // 2
        ys = np.array(
            [ys[max(0, i - half) : i + half + 1].mean() for i in range(len(ys))]
        )
        if np.all(ys == ys[0]):
            raise ConstantCurveError("ys are constant after smoothing")
    xn = (xs - xs[0]) / (xs[-1] - xs[0])
    span = ys.max() - ys.min()
    yn = (ys - ys.min()) / span if span > 0 else np.zeros_like(ys)
    # distance from each point to the chord between the normalized endpoints
    dx, dy = xn[-1] - xn[0], yn[-1] - yn[0]
    norm = np.hypot(dx, dy)
    dist = np.abs(dx * (yn - yn[0]) - dy * (xn - xn[0])) / norm
    dist[dist < 1e-12] = 0.0  # exact ties (collinear curves) go to index 0
    return int(np.argmax(dist))


# -- k-means ---------------------------------------------------------------


def _kpp_init(pts: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = pts.shape[0]
    centers = np.empty((k, pts.shape[1]))
    idx = int(rng.integers(n))
    centers[0] = pts[idx]
    d2 = ((pts - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:  # unreachable when k <= number of distinct points
            idx = int(rng.integers(n))
        centers[j] = pts[idx]
        np.minimum(d2, ((pts - centers[j]) ** 2).sum(axis=1), out=d2)
    return centers


def _center_sq_dists(pts, centers, pts_sq):
    d2 = pts_sq[:, None] + np.einsum("ij,ij->i", centers, centers)[None, :]
    d2 -= 2.0 * (pts @ centers.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def _lloyd(pts: np.ndarray, k: int, rng: np.random.Generator, max_iter: int):
    n = pts.shape[0]
    rows = np.arange(n)
    pts_sq = np.einsum("ij,ij->i", pts, pts)
    centers = _kpp_init(pts, k, rng)
    prev = None
    prev_ssd = np.inf
    repaired_last = False
    for _ in range(max_iter):
        d2 = _center_sq_dists(pts, centers, pts_sq)
        labels = d2.argmin(axis=1)
        assigned = d2[rows, labels]
        ssd = float(assigned.sum())
        # Lloyd never increases SSD; empty-cluster repair may, so skip then
        assert repaired_last or ssd <= prev_ssd * (1 + 1e-9) + 1e-9
        prev_ssd = ssd
        repaired_last = False
        empties = np.flatnonzero(np.bincount(labels, minlength=k) == 0)
        if empties.size:
            repaired_last = True
            stolen = assigned.copy()
            for c in empties:
                far = int(stolen.argmax())
                labels[far] = c
                stolen[far] = -1.0
        if prev is not None and np.array_equal(labels, prev):
            break
        prev = labels.copy()
        centers = np.zeros((k, pts.shape[1]))
        np.add.at(centers, labels, pts)
        centers /= np.bincount(labels, minlength=k)[:, None]
    # SSD of the returned partition, against its exact cluster means
    centers = np.zeros((k, pts.shape[1]))
    np.add.at(centers, labels, pts)
    centers /= np.bincount(labels, minlength=k)[:, None]
    ssd = float(((pts - centers[labels]) ** 2).sum())
    return labels, ssd


def kmeans(x, k: int, seed: int, n_restarts: int = 10, max_iter: int = 300):
    """Best-of-`n_restarts` k-means++; returns (assignment, SSD).

    Deterministic for a fixed seed; restart r draws from a sub-seed (seed, r)
    and ties in SSD keep the earliest restart.
    """
    ids, pts = _points(x)
    n = pts.shape[0]
    if not 1 <= k <= n:
        raise KTooLargeError(f"k={k} outside [1, {n}]")
    if k > np.unique(pts, axis=0).shape[0]:
        raise KTooLargeError(f"k={k} exceeds the number of distinct points")
    best_labels, best_ssd = None, np.inf
    for r in range(n_restarts):
        labels, ssd = _lloyd(pts, k, rng_for(seed, r), max_iter)
        if ssd < best_ssd:
            best_labels, best_ssd = labels, ssd
    return ClusterAssignment(ids, tuple(canonical_labels(best_labels))), best_ssd


def select_k(x, k_range=DEFAULT_K_RANGE, seed: int = 0) -> int:
    """K at the knee of the (k, SSD) curve over the candidate range."""
    ks = sorted(set(int(k) for k in k_range))
    if len(ks) < 3:
        raise DataError("select_k needs at least 3 candidate values")
    ssds = [kmeans(x, k, seed=derive_seed(seed, k))[1] for k in ks]
    idx = knee_point(KneeInput(tuple(ks), tuple(ssds)))
    return ks[idx]


# -- DBSCAN ----------------------------------------------------------------


@dataclass(frozen=True)
class DbscanParams:
    eps: float
    min_pts: int

    def __post_init__(self):
        if not (self.eps > 0):
            raise DataError(f"eps must be > 0, got {self.eps}")
        if self.min_pts < 2:
            raise DataError(f"min_pts must be >= 2, got {self.min_pts}")


def dbscan(x, params: DbscanParams) -> ClusterAssignment:
    """Density clustering per the pinned conventions in the module docstring."""
    ids, pts = _points(x)
    n = pts.shape[0]
    adj = pairwise_sq_dists(pts) <= params.eps * params.eps  # closed ball, self in
    core = adj.sum(axis=1) >= params.min_pts
    labels = np.full(n, NOISE, dtype=int)
    cluster = 0
    id_order = sorted(range(n), key=lambda i: ids[i])
    for start in id_order:
        if not core[start] or labels[start] != NOISE:
            continue
        labels[start] = cluster
        frontier = [start]
        while frontier:
            j = frontier.pop()
            fresh = np.flatnonzero(adj[j] & core & (labels == NOISE))
            labels[fresh] = cluster
            frontier.extend(fresh.tolist())
        cluster += 1
    for i in range(n):
        if not core[i]:
            neigh = np.flatnonzero(adj[i] & core)
            if neigh.size:
                labels[i] = labels[min(neigh, key=lambda j: ids[j])]
    return ClusterAssignment(ids, tuple(canonical_labels(labels)))


def select_eps(x) -> float:
    """Knee of the ascending nearest-neighbor distance curve."""
    ids, pts = _points(x)
    n = pts.shape[0]
    if n < 3:
        raise DataError("select_eps needs at least 3 points")
    d2 = pairwise_sq_dists(pts)
    np.fill_diagonal(d2, np.inf)
    nn = np.sqrt(d2.min(axis=1))
    ys = np.sort(nn)
    idx = knee_point(KneeInput(tuple(range(1, n + 1)), tuple(ys)))
    return float(ys[idx])


def select_min_pts(x, eps: float, candidates=DEFAULT_MIN_PTS_RANGE):
    """(min_pts, assignment) maximizing silhouette over the candidates.

    Candidates yielding fewer than two clusters are skipped; ties prefer the
    smaller MinPts.
    """
    cands = sorted(set(int(c) for c in candidates))
    if not cands or cands[0] < 2:
        raise DataError("min_pts candidates must be >= 2")
    best = None
    for mp in cands:
        a = dbscan(x, DbscanParams(eps, mp))
        if a.n_clusters < 2:
            continue
        score = silhouette(x, a)
        if best is None or score > best[0]:
            best = (score, mp, a)
    if best is None:
        raise NoValidConfigurationError(
            "no MinPts candidate produced at least two clusters"
        )
    return best[1], best[2]


# -- silhouette -------------------------------------------------------------


def silhouette(x, a: ClusterAssignment) -> float:
    """Mean silhouette over non-noise points; singleton clusters score 0."""
    ids, pts = _points(x)
    labels = np.array(a.labels)
    mask = labels != NOISE
    pts, labels = pts[mask], labels[mask]
    k = int(labels.max()) + 1 if labels.size else 0
    if k < 2:
        raise TooFewClustersError("silhouette needs at least two clusters")
    d = np.sqrt(pairwise_sq_dists(pts))
    onehot = np.zeros((pts.shape[0], k))
    onehot[np.arange(pts.shape[0]), labels] = 1.0
    sums = d @ onehot  # (n, k): total distance to each cluster
    counts = onehot.sum(axis=0)
    own = counts[labels]
    scores = np.zeros(pts.shape[0])
    multi = own > 1
    a_val = np.zeros(pts.shape[0])
    a_val[multi] = sums[np.arange(pts.shape[0]), labels][multi] / (own[multi] - 1)
    means = sums / counts[None, :]
    means[np.arange(pts.shape[0]), labels] = np.inf
    b_val = means.min(axis=1)
    denom = np.maximum(a_val, b_val)
    ok = multi & (denom > 0)
    scores[ok] = (b_val[ok] - a_val[ok]) / denom[ok]
    return float(scores.mean())


# -- Ward agglomerative ------------------------------------------------------


def _ward_merge_sequence(pts: np.ndarray):
    """All N-1 Ward merges as (slot_i, slot_j, cost); updates via the
    Lance-Williams recurrence on squared distances. The cost is the increase
    in total within-cluster sum of squares. Ties pick the smallest (i, j)."""
    n = pts.shape[0]
    d = pairwise_sq_dists(pts)  # working matrix holds 2x the merge cost
    np.fill_diagonal(d, np.inf)
    sizes = np.ones(n)
    active = np.ones(n, dtype=bool)
    merges = []
    for _ in range(n - 1):
        flat = int(np.argmin(d))
        i, j = divmod(flat, n)
        if i > j:
            i, j = j, i
        cost = d[i, j] / 2.0
        merges.append((i, j, cost))
        k = active.copy()
        k[[i, j]] = False
        ni, nj, nk = sizes[i], sizes[j], sizes[k]
        newd = ((ni + nk) * d[i, k] + (nj + nk) * d[j, k] - nk * d[i, j]) / (
            ni + nj + nk
        )
        d[i, k] = newd
        d[k, i] = newd
        d[j, :] = np.inf
        d[:, j] = np.inf
        sizes[i] += sizes[j]
        active[j] = False
    return merges


def ward_merge_costs(x) -> np.ndarray:
    """Within-cluster variance increase of each successive Ward merge."""
    ids, pts = _points(x)
    return np.array([c for _, _, c in _ward_merge_sequence(pts)])


def hac_ward(x, n_clusters: int) -> ClusterAssignment:
    """Agglomerative clustering under the Ward objective; no noise labels."""
    ids, pts = _points(x)
    n = pts.shape[0]
    if not 1 <= n_clusters <= n:
        raise DataError(f"n_clusters={n_clusters} outside [1, {n}]")
    members = {i: [i] for i in range(n)}
    for i, j, _ in _ward_merge_sequence(pts)[: n - n_clusters]:
        members[i].extend(members.pop(j))
    labels = np.empty(n, dtype=int)
    for slot, pts_idx in members.items():
        labels[pts_idx] = slot
    return ClusterAssignment(ids, tuple(canonical_labels(labels)))
