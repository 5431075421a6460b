"""Hierarchical density clustering with automatic flat-cluster extraction.

The algorithm, with every convention pinned so an independent brute-force
evaluation can reproduce it exactly:

1. Core distance of a point = Euclidean distance to its k-th nearest *other*
   point, k = min(min_cluster_size, N-1).
2. Mutual reachability mr(a, b) = max(core_a, core_b, d(a, b)).
3. Exact minimum spanning tree of the mutual-reachability graph (Prim,
   smallest-index tie breaking).
4. Single-linkage dendrogram from the MST edges sorted by
   (weight, min endpoint, max endpoint).
5. Condensed tree at min_cluster_size with density lambda = 1/distance:
   walking down, a merge node is a true split only when both sides hold at
   least min_cluster_size points; smaller sides fall out of the current
   cluster at that lambda, and if both sides are small the cluster ends
   there.
6. Cluster stability = sum over exit events of (lambda_exit - lambda_birth)
   times the exiting mass; a cluster is kept iff its stability strictly
   exceeds the summed stability propagated from its descendants (on
   equality the mass goes to the descendants), the root is never kept, and
   keeping a cluster discards everything below it.
7. A point is labeled by the unique kept ancestor (inclusive) of the cluster
   it fell out of; points without one are noise.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .clustering import (
    NOISE,
    ClusterAssignment,
    _points,
    canonical_labels,
    pairwise_sq_dists,
)
from .errors import DataError, MinClusterSizeTooLargeError


def _prim_mst(w: np.ndarray):
    """Exact MST of a dense symmetric weight matrix as (weight, u, v) edges."""
    n = w.shape[0]
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    key = w[0].copy()
    key[0] = np.inf
    parent = np.zeros(n, dtype=int)
    edges = []
    for _ in range(n - 1):
        v = int(np.argmin(key))  # ties resolve to the smallest index
        edges.append((float(key[v]), int(parent[v]), v))
        in_tree[v] = True
        key[v] = np.inf
        closer = (w[v] < key) & ~in_tree
        parent[closer] = v
        key[closer] = w[v][closer]
    return edges


def _linkage(edges, n: int):
    """Single-linkage merge tree; node n+t joins the components of edge t."""
    parent = list(range(2 * n - 1))

    def find(i: int) -> int:
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    children = np.empty((n - 1, 2), dtype=int)
    heights = np.empty(n - 1)
    sizes = np.ones(2 * n - 1, dtype=int)
    for t, (w, u, v) in enumerate(edges):
        ru, rv = find(u), find(v)
        node = n + t
        children[t] = (ru, rv)
        heights[t] = w
        sizes[node] = sizes[ru] + sizes[rv]
        parent[ru] = node
        parent[rv] = node
    return children, heights, sizes


def _leaf_points(node: int, children, n: int):
    out = []
    stack = [node]
    while stack:
        cur = stack.pop()
        if cur < n:
            out.append(cur)
        else:
            stack.extend(children[cur - n])
    return out


def _condense(children, heights, sizes, n: int, mcs: int):
    """Condensed cluster tree.

    Returns (point_rows, cluster_rows, parent_of, children_of) where
    point_rows are (cluster, point, lambda) exit events and cluster_rows are
    (parent, child, lambda, size) birth events; cluster 0 is the root.
    """
    root = 2 * n - 2
    relabel = {root: 0}
    parent_of = {0: None}
    children_of = {0: []}
    point_rows = []
    cluster_rows = []
    next_cluster = 1
    queue = deque([root])
    while queue:
        node = queue.popleft()
        cluster = relabel[node]
        left, right = children[node - n]
        w = heights[node - n]
        lam = 1.0 / w if w > 0 else np.inf
        big_left = sizes[left] >= mcs
        big_right = sizes[right] >= mcs
        if big_left and big_right:
            for child in (left, right):
                cluster_rows.append((cluster, next_cluster, lam, int(sizes[child])))
                relabel[child] = next_cluster
                parent_of[next_cluster] = cluster
                children_of[cluster].append(next_cluster)
                children_of[next_cluster] = []
                next_cluster += 1
                queue.append(child)
        elif big_left or big_right:
            keep, shed = (left, right) if big_left else (right, left)
            relabel[keep] = cluster
            queue.append(keep)
            for p in _leaf_points(shed, children, n):
                point_rows.append((cluster, p, lam))
        else:
            for child in (left, right):
                for p in _leaf_points(child, children, n):
                    point_rows.append((cluster, p, lam))
    return point_rows, cluster_rows, parent_of, children_of


def _select_clusters(point_rows, cluster_rows, parent_of, children_of):
    birth = {0: 0.0}
    for _, child, lam, _ in cluster_rows:
        birth[child] = lam
    stability = {c: 0.0 for c in parent_of}
    for cluster, _, lam in point_rows:
        stability[cluster] += lam - birth[cluster]
    for parent, _, lam, size in cluster_rows:
        stability[parent] += (lam - birth[parent]) * size
    kept = {}
    propagated = {}
    for c in sorted(parent_of, reverse=True):  # children have larger ids
        subtree = sum(propagated[ch] for ch in children_of[c])
        kept[c] = c != 0 and stability[c] > subtree
        propagated[c] = stability[c] if kept[c] else subtree
    selected = set()
    for c, is_kept in kept.items():
        if not is_kept:
            continue
        anc = parent_of[c]
        while anc is not None and not kept[anc]:
            anc = parent_of[anc]
        if anc is None:
            selected.add(c)
    return selected


def hdbscan(x, min_cluster_size: int) -> ClusterAssignment:
    """Flat clusters from the condensed-tree procedure above; rest is noise."""
    ids, pts = _points(x)
    n = pts.shape[0]
    if min_cluster_size < 2:
        raise DataError(f"min_cluster_size must be >= 2, got {min_cluster_size}")
    if min_cluster_size > n:
        raise MinClusterSizeTooLargeError(
            f"min_cluster_size={min_cluster_size} exceeds {n} points"
        )
    d = np.sqrt(pairwise_sq_dists(pts))
    k = min(min_cluster_size, n - 1)
    core = np.sort(d, axis=1)[:, k]  # column 0 is the point itself
    mreach = np.maximum(np.maximum(core[:, None], core[None, :]), d)
    np.fill_diagonal(mreach, 0.0)
    edges = _prim_mst(mreach)
    edges.sort(key=lambda e: (e[0], min(e[1], e[2]), max(e[1], e[2])))
    children, heights, sizes = _linkage(edges, n)
    point_rows, cluster_rows, parent_of, children_of = _condense(
        children, heights, sizes, n, min_cluster_size
    )
    assert len(point_rows) == n
    selected = _select_clusters(point_rows, cluster_rows, parent_of, children_of)
    labels = np.full(n, NOISE, dtype=int)
    resolved: dict = {}
    for cluster, point, _ in point_rows:
        if cluster not in resolved:
            anc = cluster
            while anc is not None and anc not in selected:
                anc = parent_of[anc]
            resolved[cluster] = anc
        if resolved[cluster] is not None:
            labels[point] = resolved[cluster]
    return ClusterAssignment(ids, tuple(canonical_labels(labels)))
