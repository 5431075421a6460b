"""Naive quadratic DBSCAN used as an independent reference in tests.

Pure-Python, set-based, and deliberately free of any shared code with the
package implementation beyond the written conventions: closed-ball
neighborhoods including the point itself, MinPts counting the point itself,
core components found in lexicographic id order, border points joining their
smallest-id core neighbor, and labels renumbered by first appearance in row
order.
"""

from __future__ import annotations


def naive_dbscan(ids, points, eps, min_pts):
    n = len(ids)

    def dist2(a, b):
        return sum((u - v) ** 2 for u, v in zip(points[a], points[b]))

    limit = eps * eps
    nbrs = [[j for j in range(n) if dist2(i, j) <= limit] for i in range(n)]
    core = [len(nbrs[i]) >= min_pts for i in range(n)]
    labels = [None] * n
    cluster = 0
    for start in sorted(range(n), key=lambda i: ids[i]):
        if not core[start] or labels[start] is not None:
            continue
        component = {start}
        frontier = [start]
        while frontier:
            j = frontier.pop()
            for nb in nbrs[j]:
                if core[nb] and nb not in component:
                    component.add(nb)
                    frontier.append(nb)
        for m in component:
            labels[m] = cluster
        cluster += 1
    for i in range(n):
        if not core[i]:
            core_nbrs = [j for j in nbrs[i] if core[j]]
            if core_nbrs:
                labels[i] = labels[min(core_nbrs, key=lambda j: ids[j])]
            else:
                labels[i] = -1
    return relabel_by_first_appearance(labels)


def relabel_by_first_appearance(labels):
    mapping = {}
    out = []
    for l in labels:
        if l == -1:
            out.append(-1)
            continue
        if l not in mapping:
            mapping[l] = len(mapping)
        out.append(mapping[l])
    return out
