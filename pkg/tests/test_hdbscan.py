"""Density-hierarchy clustering: fixtures plus equality with a naive reference.

The reference in oracle_hdbscan.py builds the single-linkage hierarchy by
merging sets over the full sorted edge list (no MST) and condenses it with
recursive set arithmetic, so it shares no code paths with the production
implementation.  Random instances use continuous coordinates: equal-weight
merges are legitimate label-changing ties, so they are kept out of the
comparison by construction.
"""

from __future__ import annotations

import numpy as np
import pytest

from oracle_hdbscan import naive_hdbscan
from rccpipe.clustering import NOISE
from rccpipe.data import FeatureMatrix
from rccpipe.errors import DataError, MinClusterSizeTooLargeError
from rccpipe.hdbscan import hdbscan


def matrix(pts):
    pts = np.asarray(pts, dtype=float)
    ids = tuple(f"h{k:04d}" for k in range(len(pts)))
    return FeatureMatrix(ids, pts)


def test_two_equal_blobs_recovered_exactly():
    rng = np.random.default_rng(11)
    a = rng.normal(loc=0.0, scale=0.5, size=(20, 3))
    b = rng.normal(loc=40.0, scale=0.5, size=(20, 3))
    pts = np.concatenate([a, b])
    got = hdbscan(matrix(pts), min_cluster_size=5)
    labels = np.array(got.labels)
    assert set(labels[:20]) == {0}
    assert set(labels[20:]) == {1}


def test_small_uniform_sample_never_splits():
    # With n < 2 * min_cluster_size there is no way to carve two clusters.
    rng = np.random.default_rng(7)
    for trial in range(20):
        n = int(rng.integers(5, 10))
        pts = rng.uniform(-1, 1, size=(n, 2))
        got = hdbscan(matrix(pts), min_cluster_size=5)
        assert got.n_clusters <= 1


def test_unbalanced_blobs_both_recovered():
    rng = np.random.default_rng(23)
    big = rng.normal(loc=0.0, scale=0.3, size=(30, 2))
    small = rng.normal(loc=25.0, scale=0.3, size=(6, 2))
    pts = np.concatenate([big, small])
    got = hdbscan(matrix(pts), min_cluster_size=5)
    labels = np.array(got.labels)
    assert set(labels[:30]) == {0}
    assert set(labels[30:]) == {1}


def test_min_cluster_size_larger_than_n_rejected():
    pts = np.arange(8.0).reshape(4, 2)
    with pytest.raises(MinClusterSizeTooLargeError):
        hdbscan(matrix(pts), min_cluster_size=5)


def test_min_cluster_size_below_two_rejected():
    pts = np.arange(8.0).reshape(4, 2)
    with pytest.raises(DataError):
        hdbscan(matrix(pts), min_cluster_size=1)


def test_matches_naive_reference_on_random_instances():
    rng = np.random.default_rng(20240818)
    trials = 0
    while trials < 250:
        n = int(rng.integers(4, 13))
        d = int(rng.integers(1, 4))
        if rng.integers(2):
            pts = rng.uniform(-5, 5, size=(n, d))
        else:
            centers = rng.uniform(-10, 10, size=(2, d))
            pts = centers[rng.integers(2, size=n)] + rng.normal(
                scale=0.5, size=(n, d)
            )
        mcs = int(rng.integers(2, min(6, n) + 1))
        got = hdbscan(matrix(pts), min_cluster_size=mcs)
        want = naive_hdbscan(pts.tolist(), mcs)
        assert list(got.labels) == want, f"trial {trials}: n={n} d={d} mcs={mcs}"
        trials += 1


def test_far_straggler_is_noise_next_to_two_blobs():
    rng = np.random.default_rng(3)
    pts = np.concatenate(
        [
            rng.normal(loc=0.0, scale=0.2, size=(6, 2)),
            rng.normal(loc=10.0, scale=0.2, size=(6, 2)),
            [[100.0, 100.0]],
        ]
    )
    got = hdbscan(matrix(pts), min_cluster_size=3)
    labels = np.array(got.labels)
    assert set(labels[:6]) == {0}
    assert set(labels[6:12]) == {1}
    assert labels[12] == NOISE
    assert list(got.labels) == naive_hdbscan(pts.tolist(), 3)


def test_deterministic_across_calls():
    rng = np.random.default_rng(99)
    pts = rng.uniform(-3, 3, size=(40, 4))
    first = hdbscan(matrix(pts), min_cluster_size=4)
    second = hdbscan(matrix(pts), min_cluster_size=4)
    assert first.labels == second.labels
