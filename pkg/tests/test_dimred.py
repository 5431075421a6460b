"""PCA and UMAP behavior: fixed fixtures, invariants, and derived oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rccpipe.clustering import DbscanParams, dbscan, pairwise_sq_dists
from rccpipe.data import FeatureMatrix
from rccpipe.dimred import (
    Embedding,
    UmapParams,
    find_curve_params,
    pca_fit_transform,
    umap_fit_transform,
)
from rccpipe.errors import (
    DataError,
    DegenerateDistancesError,
    TooFewSamplesError,
)


def fm(values, prefix="r"):
    values = np.asarray(values, dtype=float)
    return FeatureMatrix(tuple(f"{prefix}{i:04d}" for i in range(len(values))), values)


# ---------------------------------------------------------------- PCA


class TestPcaFixtures:
    def test_collinear_points_project_to_signed_distances(self):
        # Points on the line y = 2x; the lone component is (1,2)/sqrt(5)
        # after the positive-largest-loading flip, so projections are the
        # signed distances -sqrt(5), 0, +sqrt(5) from the centroid.
        emb, ratios = pca_fit_transform(fm([[1, 2], [2, 4], [3, 6]]), 1)
        root5 = np.sqrt(5.0)
        np.testing.assert_allclose(
            emb.values[:, 0], [-root5, 0.0, root5], atol=1e-12
        )
        assert ratios == pytest.approx((1.0,))

    def test_identical_rows_give_zero_ratios(self):
        emb, ratios = pca_fit_transform(fm([[3, 1, 4], [3, 1, 4], [3, 1, 4]]), 2)
        assert ratios == (0.0, 0.0)
        np.testing.assert_array_equal(emb.values, 0.0)

    def test_returns_embedding_with_same_ids(self):
        x = fm([[1, 0], [0, 1], [1, 1]])
        emb, _ = pca_fit_transform(x, 2)
        assert isinstance(emb, Embedding)
        assert emb.ids == x.ids

    def test_single_row_raises(self):
        with pytest.raises(TooFewSamplesError):
            pca_fit_transform(fm([[1, 2]]), 1)

    def test_component_count_out_of_range_raises(self):
        x = fm([[1, 2], [3, 4], [5, 6]])
        with pytest.raises(DataError):
            pca_fit_transform(x, 0)
        with pytest.raises(DataError):
            pca_fit_transform(x, 3)  # min(N, M) == 2


class TestPcaInvariants:
    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_projection_columns_orthogonal(self, seed):
        rng = np.random.default_rng(seed)
        n, m = rng.integers(4, 12), rng.integers(3, 8)
        x = fm(rng.normal(0, 1, (n, m)))
        k = min(n, m) - 1
        emb, _ = pca_fit_transform(x, k)
        gram = emb.values.T @ emb.values
        off = gram - np.diag(np.diag(gram))
        assert np.abs(off).max() <= 1e-8 * max(1.0, np.abs(gram).max())

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_variance_ratios_non_increasing_and_sum_at_most_one(self, seed):
        rng = np.random.default_rng(seed)
        x = fm(rng.normal(0, 1, (10, 6)))
        _, ratios = pca_fit_transform(x, 4)
        assert all(a >= b - 1e-12 for a, b in zip(ratios, ratios[1:]))
        assert sum(ratios) <= 1.0 + 1e-12

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_exact_subspace_reconstructs_to_working_precision(self, seed):
        # Data of true rank r embedded in a wider space: keeping r
        # components loses nothing, so per-row reconstruction error
        # sqrt(|x_c|^2 - |proj|^2) vanishes.
        rng = np.random.default_rng(seed)
        r = int(rng.integers(1, 4))
        basis = rng.normal(0, 1, (r, 9))
        coords = rng.normal(0, 2, (12, r))
        x = fm(coords @ basis)
        emb, ratios = pca_fit_transform(x, r)
        centered = x.values - x.values.mean(axis=0)
        # Best linear reconstruction of the centered rows from the
        # projections; for an exact subspace the residual is numerical zero.
        coefs, *_ = np.linalg.lstsq(emb.values, centered, rcond=None)
        residual = centered - emb.values @ coefs
        scale = max(1.0, np.abs(centered).max())
        assert np.abs(residual).max() <= 1e-8 * scale
        assert sum(ratios) == pytest.approx(1.0, abs=1e-9)

    def test_projection_matches_direct_svd_subspace(self):
        rng = np.random.default_rng(77)
        x = fm(rng.normal(0, 1, (15, 7)))
        emb, _ = pca_fit_transform(x, 3)
        centered = x.values - x.values.mean(axis=0)
        # Independent route: scipy SVD, same sign convention applied by hand.
        from scipy.linalg import svd

        _, s, vt = svd(centered, full_matrices=False)
        comps = vt[:3]
        for j in range(3):
            i = np.argmax(np.abs(comps[j]))
            if comps[j][i] < 0:
                comps[j] = -comps[j]
        np.testing.assert_allclose(emb.values, centered @ comps.T, atol=1e-10)


# ---------------------------------------------------------------- UMAP


class TestUmapParams:
    def test_defaults(self):
        p = UmapParams()
        assert (p.n_neighbors, p.min_dist, p.n_epochs, p.n_components) == (
            15,
            0.1,
            200,
            2,
        )

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_neighbors": 1},
            {"min_dist": 0.0},
            {"min_dist": -0.5},
            {"n_epochs": 0},
            {"n_components": 0},
        ],
    )
    def test_invalid_params_raise(self, kwargs):
        with pytest.raises(DataError):
            UmapParams(**kwargs)


class TestCurveFit:
    def test_low_dim_kernel_fits_min_dist_curve(self):
        # The (a, b) constants must make 1/(1 + a t^(2b)) track the target
        # curve: 1 for t <= min_dist, exp(-(t - min_dist)) beyond it.
        for min_dist in (0.1, 0.25, 0.5):
            a, b = find_curve_params(min_dist)
            assert a > 0 and b > 0
            t = np.linspace(0, 3.0, 300)
            fitted = 1.0 / (1.0 + a * t ** (2.0 * b))
            target = np.where(t <= min_dist, 1.0, np.exp(-(t - min_dist)))
            rmse = np.sqrt(((fitted - target) ** 2).mean())
            assert rmse <= 0.05

    def test_cached_and_deterministic(self):
        assert find_curve_params(0.1) == find_curve_params(0.1)


class TestUmap:
    def test_too_few_rows_raises(self):
        rng = np.random.default_rng(0)
        x = fm(rng.normal(0, 1, (15, 4)))
        with pytest.raises(TooFewSamplesError):
            umap_fit_transform(x, UmapParams(n_neighbors=15))

    def test_identical_rows_raise_degenerate_distances(self):
        x = fm(np.ones((20, 4)))
        with pytest.raises(DegenerateDistancesError):
            umap_fit_transform(x, UmapParams(n_neighbors=5))

    def test_same_seed_bit_identical(self):
        rng = np.random.default_rng(5)
        x = fm(rng.normal(0, 1, (40, 6)))
        p = UmapParams(n_neighbors=8, n_epochs=50, seed=11)
        e1 = umap_fit_transform(x, p)
        e2 = umap_fit_transform(x, p)
        assert np.array_equal(e1.values, e2.values)

    def test_different_seeds_differ(self):
        rng = np.random.default_rng(5)
        x = fm(rng.normal(0, 1, (40, 6)))
        e1 = umap_fit_transform(x, UmapParams(n_neighbors=8, n_epochs=50, seed=1))
        e2 = umap_fit_transform(x, UmapParams(n_neighbors=8, n_epochs=50, seed=2))
        assert not np.array_equal(e1.values, e2.values)

    def test_output_shape_and_ids(self):
        rng = np.random.default_rng(5)
        x = fm(rng.normal(0, 1, (30, 10)))
        emb = umap_fit_transform(x, UmapParams(n_neighbors=6, n_epochs=30, seed=0))
        assert isinstance(emb, Embedding)
        assert emb.ids == x.ids
        assert emb.values.shape == (30, 2)

    def test_two_blobs_embed_into_two_dbscan_clusters(self):
        # Derived oracle: build two well-separated blobs, embed, then choose
        # eps from the embedding itself (between the largest within-blob
        # nearest-neighbor distance and the gap between blobs).  DBSCAN at
        # that eps must recover exactly the two blobs with no noise.
        rng = np.random.default_rng(42)
        pts = np.concatenate(
            [rng.normal(0.0, 1.0, (40, 10)), rng.normal(15.0, 1.0, (40, 10))]
        )
        x = fm(pts)
        emb = umap_fit_transform(x, UmapParams(seed=3))
        y = emb.values
        d = np.sqrt(pairwise_sq_dists(y))
        np.fill_diagonal(d, np.inf)
        max_intra = max(
            d[:40, :40].min(axis=1).max(), d[40:, 40:].min(axis=1).max()
        )
        min_inter = d[:40, 40:].min()
        assert max_intra < min_inter, "embedding failed to separate the blobs"
        eps = float(np.sqrt(max_intra * min_inter))
        asg = dbscan(emb, DbscanParams(eps=eps, min_pts=2))
        assert asg.n_clusters == 2
        assert asg.n_noise == 0
        labels = np.array(asg.labels)
        assert len(set(labels[:40])) == 1
        assert len(set(labels[40:])) == 1
        assert labels[0] != labels[40]

    def test_neighborhoods_survive_embedding(self):
        # Points from the same generating blob should dominate each
        # embedded point's neighbor list.
        rng = np.random.default_rng(9)
        pts = np.concatenate(
            [rng.normal(c, 1.0, (30, 12)) for c in (0.0, 20.0, 40.0)]
        )
        x = fm(pts)
        emb = umap_fit_transform(x, UmapParams(n_neighbors=10, seed=1))
        d = pairwise_sq_dists(emb.values)
        np.fill_diagonal(d, np.inf)
        blob = np.repeat(np.arange(3), 30)
        nearest = np.argsort(d, axis=1)[:, :10]
        same = (blob[nearest] == blob[:, None]).mean()
        assert same >= 0.9
