"""Cluster quality scoring against injected ground truth.

Given a cluster assignment and the scenario tag of every image (empty tag =
pre-existing failure of unknown cause), this module computes per-cluster
purity, scenario coverage, the redundancy ratio, inspection savings, and
the frequent/infrequent split of scenario instances.

Conventions, applied uniformly: noise points never enter purity or coverage
denominators (engineers inspect clusters, not leftovers); clusters that
contain no injected-scenario image at all are excluded from average purity;
the coverage boundary is inclusive (a cluster at exactly the threshold
covers); frequency uses a strict below-median rule, so ties with the median
count as frequent.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass

from .clustering import ClusterAssignment
from .errors import (
    DataError,
    NoClustersError,
    NoScenariosError,
    NothingCoveredError,
)

COVERAGE_THRESHOLD = 0.9


@dataclass(frozen=True)
class ClusterScore:
    """Purity of one cluster; ``purity`` is None when the cluster holds no
    injected-scenario images and is excluded from averaging."""

    cluster_id: int
    size: int
    dominant_scenario: str | None
    purity: float | None

    def __post_init__(self):
        if self.size < 1:
            raise DataError(f"cluster {self.cluster_id}: empty")
        if (self.purity is None) != (self.dominant_scenario is None):
            raise DataError(
                f"cluster {self.cluster_id}: purity and dominant scenario "
                f"must be excluded together"
            )
        if self.purity is not None and not 0 < self.purity <= 1:
            raise DataError(f"cluster {self.cluster_id}: purity {self.purity}")


@dataclass(frozen=True)
class FrequencyEntry:
    """One scenario instance (scenario within one failure set) with its
    proportion and the side of the median split it falls on."""

    set_index: int
    scenario: str
    proportion: float
    frequent: bool


@dataclass(frozen=True)
class EvaluationReport:
    scores: tuple
    avg_purity: float | None
    covered_scenarios: tuple
    coverage_pct: float
    redundancy_ratio: float | None
    savings: float
    scenario_frequencies: tuple  # of (tag, proportion), sorted by tag

    @property
    def n_clusters(self) -> int:
        return len(self.scores)


def _tags_by_cluster(a: ClusterAssignment, scenarios) -> dict:
    clusters = a.clusters()
    if not clusters:
        raise NoClustersError("assignment has no clusters, only noise")
    out = {}
    for label, members in sorted(clusters.items()):
        tags = []
        for id_ in members:
            if id_ not in scenarios:
                raise DataError(f"no scenario tag for clustered id {id_!r}")
            tags.append(scenarios[id_])
        out[label] = tags
    return out


def _tag_counts(tags) -> dict:
    counts = {}
    for tag in tags:
        if tag:
            counts[tag] = counts.get(tag, 0) + 1
    return counts


def cluster_purity(a: ClusterAssignment, scenarios) -> tuple:
    """Per-cluster scores plus the average over non-excluded clusters.

    Purity of a cluster is the best share any single injected scenario holds
    of the whole cluster (untagged members count in the denominator, never
    the numerator). Returns ``(scores, avg)`` with avg None when every
    cluster is excluded.
    """
    scores = []
    kept = []
    for label, tags in _tags_by_cluster(a, scenarios).items():
        counts = _tag_counts(tags)
        if not counts:
            scores.append(ClusterScore(label, len(tags), None, None))
            continue
        # Deterministic tie-break: alphabetically first among the largest.
        dominant = min(counts, key=lambda t: (-counts[t], t))
        purity = counts[dominant] / len(tags)
        scores.append(ClusterScore(label, len(tags), dominant, purity))
        kept.append(purity)
    avg = sum(kept) / len(kept) if kept else None
    return tuple(scores), avg


def scenario_coverage(
    a: ClusterAssignment, scenarios, threshold: float = COVERAGE_THRESHOLD
) -> tuple:
    """Scenarios owning at least ``threshold`` of some cluster, plus the
    fraction of all injected scenarios so covered."""
    if not 0 < threshold <= 1:
        raise DataError(f"coverage threshold must be in (0, 1], got {threshold}")
    universe = {scenarios[id_] for id_ in a.ids if scenarios.get(id_)}
    for id_ in a.ids:
        if id_ not in scenarios:
            raise DataError(f"no scenario tag for id {id_!r}")
    if not universe:
        raise NoScenariosError("no injected scenarios among the assignment ids")
    covered = set()
    for tags in _tags_by_cluster(a, scenarios).values():
        for tag, count in _tag_counts(tags).items():
            if count / len(tags) >= threshold:
                covered.add(tag)
    return tuple(sorted(covered)), len(covered) / len(universe)


def redundancy_ratio(n_clusters: int, n_covered: int) -> float:
    """Clusters produced per scenario actually covered."""
    if n_covered < 1:
        raise NothingCoveredError(
            "redundancy ratio undefined when no scenario is covered"
        )
    return n_clusters / n_covered


def savings(n_clusters: int, n_images: int) -> float:
    """Inspection effort saved versus eyeballing every failing image, on
    the convention that one cluster costs one image to review."""
    if n_images < 1:
        raise DataError(f"n_images must be >= 1, got {n_images}")
    if n_clusters < 0:
        raise DataError(f"n_clusters must be >= 0, got {n_clusters}")
    return 1.0 - n_clusters / n_images


def classify_frequency(sets) -> tuple:
    """Split scenario instances into frequent/infrequent around the median.

    ``sets`` holds one ``(counts, total)`` pair per failure-inducing set,
    where ``counts`` maps scenario tag to its image count. Every instance's
    proportion is compared against the median proportion over all instances
    of all sets; strictly below is infrequent. Returns ``(entries, median)``.
    """
    instances = []
    for set_index, (counts, total) in enumerate(sets):
        if total < 1:
            raise DataError(f"set {set_index}: total must be >= 1, got {total}")
        for tag in sorted(counts):
            count = counts[tag]
            if not 0 <= count <= total:
                raise DataError(
                    f"set {set_index}: count {count} for {tag!r} outside "
                    f"[0, {total}]"
                )
            instances.append((set_index, tag, count / total))
    if not instances:
        raise DataError("no scenario instances to classify")
    median = statistics.median(p for _, _, p in instances)
    entries = tuple(
        FrequencyEntry(i, tag, p, frequent=not p < median)
        for i, tag, p in instances
    )
    return entries, median


def build_report(
    a: ClusterAssignment, scenarios, threshold: float = COVERAGE_THRESHOLD
) -> EvaluationReport:
    """Assemble the full scorecard for one assignment.

    Savings counts every id in the assignment (noise included) as an image
    the engineer no longer inspects; the redundancy ratio is None when
    nothing is covered rather than an error, so reports on weak pipelines
    still come out whole.
    """
    scores, avg = cluster_purity(a, scenarios)
    covered, pct = scenario_coverage(a, scenarios, threshold)
    ratio = redundancy_ratio(a.n_clusters, len(covered)) if covered else None
    tag_total = _tag_counts(scenarios.get(id_, "") for id_ in a.ids)
    frequencies = tuple(
        (tag, tag_total[tag] / len(a.ids)) for tag in sorted(tag_total)
    )
    return EvaluationReport(
        scores=scores,
        avg_purity=avg,
        covered_scenarios=covered,
        coverage_pct=pct,
        redundancy_ratio=ratio,
        savings=savings(a.n_clusters, len(a.ids)),
        scenario_frequencies=frequencies,
    )


def report_to_dict(report: EvaluationReport) -> dict:
    """Plain-JSON form of a report; inverse of nothing, input to emitters."""
    return {
        "clusters": [
            {
                "cluster_id": s.cluster_id,
                "size": s.size,
                "dominant_scenario": s.dominant_scenario,
                "purity": s.purity,
            }
            for s in report.scores
        ],
        "avg_purity": report.avg_purity,
        "covered_scenarios": list(report.covered_scenarios),
        "coverage_pct": report.coverage_pct,
        "redundancy_ratio": report.redundancy_ratio,
        "savings": report.savings,
        "scenario_frequencies": {tag: p for tag, p in report.scenario_frequencies},
    }
