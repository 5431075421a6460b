"""Dimensionality reduction: PCA and a self-contained UMAP.

PCA works on the SVD of the mean-centered matrix (stable for wide data) with
a fixed sign convention so repeated runs and independent checks agree: each
component is flipped, if needed, so its largest-magnitude loading is
positive.

UMAP follows the standard construction with every stochastic choice pinned
to the seed:

1. Exact k-nearest neighbors by Euclidean distance (self excluded, distance
   ties broken by smaller index).
2. Per point, rho = distance to the nearest neighbor and sigma solved by
   binary search (64 halvings, tolerance 1e-5) so the smoothed kernel mass
   sum_j exp(-max(0, d_ij - rho_i) / sigma_i) hits log2(n_neighbors); sigma
   is floored at 1e-3 times the point's mean neighbor distance (global mean
   when rho is 0).
3. Directed weights w_ij = exp(-max(0, d_ij - rho_i) / sigma_i) combined by
   fuzzy union W + W^T - W o W^T.
4. Layout initialized uniformly in [-10, 10]^d from the seed, then n_epochs
   rounds of stochastic gradient descent: each edge is sampled every
   (w_max / w) epochs, attraction moves both endpoints, and per sampled edge
   a budget of negative samples (rate 5) repels the head from random points.
   Edges are visited one at a time in a fixed order (sorted by head then
   tail id), each update immediately visible to the next, which is what lets
   dense regions relax into evenly spaced layouts; gradients are clipped to
   [-4, 4] per dimension; the learning rate decays linearly to 0.  The inner
   loop is JIT-compiled with numba.
5. The low-dimensional kernel 1 / (1 + a t^(2b)) uses constants fit at
   runtime to the min_dist offset-exponential curve; the fitting routine
   lives here, so there are no frozen magic numbers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit
from scipy.optimize import curve_fit

from .clustering import pairwise_sq_dists
from .data import FeatureMatrix
from .errors import DataError, DegenerateDistancesError, TooFewSamplesError
from .seeding import rng_for


@dataclass(frozen=True)
class Embedding(FeatureMatrix):
    """Reduced-dimension feature rows; same ids, layout, and file formats."""


@dataclass(frozen=True)
class UmapParams:
    n_neighbors: int = 15
    min_dist: float = 0.1
    n_epochs: int = 200
    n_components: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.n_neighbors < 2:
            raise DataError(f"n_neighbors must be >= 2, got {self.n_neighbors}")
        if not (0 < self.min_dist <= 1):
            raise DataError(f"min_dist must be in (0, 1], got {self.min_dist}")
        if self.n_epochs < 1:
            raise DataError(f"n_epochs must be >= 1, got {self.n_epochs}")
        if self.n_components < 1:
            raise DataError(f"n_components must be >= 1, got {self.n_components}")
        if self.seed < 0:
            raise DataError(f"seed must be >= 0, got {self.seed}")


def pca_fit_transform(x: FeatureMatrix, n_components: int):
    """Project onto the top principal directions.

    Returns (embedding, explained_variance_ratios); ratios are zeros when
    the data has no variance at all.
    """
    if x.n < 2:
        raise TooFewSamplesError(f"PCA needs at least 2 rows, got {x.n}")
    if not (1 <= n_components <= min(x.n, x.m)):
        raise DataError(
            f"n_components must be in [1, {min(x.n, x.m)}], got {n_components}"
        )
    centered = x.values - x.values.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:n_components].copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    projections = centered @ components.T
    variances = s**2 / (x.n - 1)
    total = float(variances.sum())
    if total > 0:
        ratios = tuple(float(v) for v in variances[:n_components] / total)
    else:
        ratios = (0.0,) * n_components
    return Embedding(x.ids, projections), ratios


@lru_cache(maxsize=None)
def find_curve_params(min_dist: float, spread: float = 1.0):
    """Least-squares (a, b) so 1/(1+a t^(2b)) tracks the min_dist kernel.

    The target is 1 for t <= min_dist and exp(-(t - min_dist)/spread)
    beyond, sampled on [0, 3*spread].
    """
    ts = np.linspace(0.0, 3.0 * spread, 300)
    target = np.where(ts <= min_dist, 1.0, np.exp(-(ts - min_dist) / spread))
    (a, b), _ = curve_fit(lambda t, a, b: 1.0 / (1.0 + a * t ** (2.0 * b)), ts, target)
    return float(a), float(b)


def _knn(pts: np.ndarray, k: int):
    d = np.sqrt(pairwise_sq_dists(pts))
    if not d.any():
        raise DegenerateDistancesError("all pairwise distances are zero")
    np.fill_diagonal(d, np.inf)
    order = np.argsort(d, axis=1, kind="stable")[:, :k]
    return order, np.take_along_axis(d, order, axis=1)


def _calibrate_sigmas(knn_d: np.ndarray, k: int):
    """Binary-search the per-point kernel bandwidths (rho is column 0)."""
    n = knn_d.shape[0]
    rho = knn_d[:, 0]
    target = np.log2(k)
    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    mid = np.ones(n)
    for _ in range(64):
        mass = np.exp(-np.maximum(knn_d - rho[:, None], 0.0) / mid[:, None]).sum(axis=1)
        err = mass - target
        live = np.abs(err) >= 1e-5
        if not live.any():
            break
        shrink = live & (err > 0)
        hi[shrink] = mid[shrink]
        mid[shrink] = (lo[shrink] + hi[shrink]) / 2
        grow = live & (err < 0)
        lo[grow] = mid[grow]
        unbounded = grow & np.isinf(hi)
        mid[unbounded] *= 2
        bounded = grow & ~np.isinf(hi)
        mid[bounded] = (lo[bounded] + hi[bounded]) / 2
    floor = np.where(rho > 0, 1e-3 * knn_d.mean(axis=1), 1e-3 * knn_d.mean())
    return rho, np.maximum(mid, floor)


def _fuzzy_graph(pts: np.ndarray, k: int):
    n = len(pts)
    order, knn_d = _knn(pts, k)
    rho, sigma = _calibrate_sigmas(knn_d, k)
    w = np.zeros((n, n))
    rows = np.repeat(np.arange(n), k)
    w[rows, order.ravel()] = np.exp(
        -np.maximum(knn_d - rho[:, None], 0.0) / sigma[:, None]
    ).ravel()
    return w + w.T - w * w.T


@njit(cache=True)
def _layout(y, heads, tails, epochs_per_sample, a, b, n_epochs, rng):
    """Run the edge-sampled SGD rounds in place (see module docstring)."""
    n, dim = y.shape
    next_sample = epochs_per_sample.copy()
    epochs_per_negative = epochs_per_sample / 5.0
    next_negative = epochs_per_negative.copy()
    for epoch in range(n_epochs):
        alpha = 1.0 - epoch / n_epochs
        for i in range(len(heads)):
            if next_sample[i] > epoch:
                continue
            h, t = heads[i], tails[i]
            d2 = 0.0
            for q in range(dim):
                d2 += (y[h, q] - y[t, q]) ** 2
            if d2 > 0.0:
                coef = (-2.0 * a * b * d2 ** (b - 1.0)) / (1.0 + a * d2**b)
                for q in range(dim):
                    g = coef * (y[h, q] - y[t, q])
                    if g > 4.0:
                        g = 4.0
                    elif g < -4.0:
                        g = -4.0
                    y[h, q] += alpha * g
                    y[t, q] -= alpha * g
            next_sample[i] += epochs_per_sample[i]
            n_negative = int((epoch - next_negative[i]) / epochs_per_negative[i])
            for _ in range(n_negative):
                o = rng.integers(0, n)
                if o == h:
                    continue
                d2 = 0.0
                for q in range(dim):
                    d2 += (y[h, q] - y[o, q]) ** 2
                if d2 > 0.0:
                    coef = (2.0 * b) / ((0.001 + d2) * (1.0 + a * d2**b))
                    for q in range(dim):
                        g = coef * (y[h, q] - y[o, q])
                        if g > 4.0:
                            g = 4.0
                        elif g < -4.0:
                            g = -4.0
                        y[h, q] += alpha * g
                else:
                    for q in range(dim):
                        y[h, q] += alpha * 4.0
            next_negative[i] += n_negative * epochs_per_negative[i]


def umap_fit_transform(x: FeatureMatrix, p: UmapParams = UmapParams()) -> Embedding:
    if x.n <= p.n_neighbors:
        raise TooFewSamplesError(
            f"need more than n_neighbors={p.n_neighbors} rows, got {x.n}"
        )
    graph = _fuzzy_graph(x.values, p.n_neighbors)
    heads, tails = np.nonzero(graph)
    weights = graph[heads, tails]
    epochs_per_sample = weights.max() / weights
    a, b = find_curve_params(p.min_dist)

    rng = rng_for(p.seed)
    y = rng.uniform(-10.0, 10.0, size=(x.n, p.n_components))
    _layout(y, heads, tails, epochs_per_sample, a, b, p.n_epochs, rng)
    return Embedding(x.ids, y)
