"""Clustering baseline: Lloyd's k-means with k-means++ seeding.

Used as the comparison point for learned-code degeneracy spectra: the
cluster-size histogram of a k-means partition plays the same role as
the code-frequency spectrum of a trained layer, with k matched to the
number of distinct codes the layer produced.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import Rng, matmul
from .representation import DegeneracySpectrum, spectrum_from_sizes


@dataclass
class KMeansResult:
    centers: np.ndarray      # (k, d)
    assignments: np.ndarray  # (n,) int64 cluster index per sample
    inertia: float           # sum of squared distances to assigned centers
    n_iters: int
    converged: bool

    @property
    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=len(self.centers))


def _pairwise_sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """(n, k) squared euclidean distances via the expanded product form."""
    x_sq = (x * x).sum(axis=1)[:, None]
    c_sq = (centers * centers).sum(axis=1)[None, :]
    d = x_sq + c_sq - 2.0 * matmul(x, centers.T)
    np.maximum(d, 0.0, out=d)
    return d


def _seed_centers(x: np.ndarray, k: int, rng: Rng) -> np.ndarray:
    """k-means++ seeding: first center uniform, later centers drawn with
    probability proportional to squared distance from the chosen set."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    first = int(rng.integers(1, n)[0])
    centers[0] = x[first]
    d2 = _pairwise_sq_dists(x, centers[:1])[:, 0]
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with chosen centers
            idx = int(rng.integers(1, n)[0])
        else:
            u = rng.uniforms(1)[0] * total
            idx = int(np.searchsorted(np.cumsum(d2), u))
            idx = min(idx, n - 1)
        centers[j] = x[idx]
        d2 = np.minimum(d2, _pairwise_sq_dists(x, centers[j:j + 1])[:, 0])
    return centers


def kmeans(x: np.ndarray, k: int, rng: Rng, max_iters: int = 300,
           tol: float = 0.0) -> KMeansResult:
    """Lloyd iterations until assignments stop changing (or max_iters).

    Empty clusters are re-seeded to the point farthest from its current
    center, so exactly k clusters always come back. Deterministic given
    the rng state.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    centers = _seed_centers(x, k, rng)
    assign = np.full(n, -1, dtype=np.int64)
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        d2 = _pairwise_sq_dists(x, centers)
        new_assign = d2.argmin(axis=1)
        sizes = np.bincount(new_assign, minlength=k)
        empties = np.flatnonzero(sizes == 0)
        if empties.size:
            nearest = d2[np.arange(n), new_assign]
            far_order = np.argsort(-nearest, kind="stable")
            for rank, cj in enumerate(empties):
                victim = int(far_order[rank])
                centers[cj] = x[victim]
                new_assign[victim] = cj
            d2 = _pairwise_sq_dists(x, centers)
            new_assign = d2.argmin(axis=1)
        if np.array_equal(new_assign, assign):
            converged = True
            assign = new_assign
            break
        assign = new_assign
        for j in range(k):
            members = x[assign == j]
            if len(members):
                centers[j] = members.mean(axis=0)
        if tol > 0:
            pass  # assignment equality is the stop rule; tol kept for API parity
    inertia = float(_pairwise_sq_dists(x, centers)[np.arange(n), assign].sum())
    return KMeansResult(centers=centers, assignments=assign, inertia=inertia,
                        n_iters=it, converged=converged)


def cluster_size_spectrum(result: KMeansResult) -> DegeneracySpectrum:
    """Degeneracy spectrum of cluster sizes (empty clusters excluded,
    matching how unobserved codes never enter a code spectrum)."""
    sizes = result.cluster_sizes
    return spectrum_from_sizes(sizes[sizes > 0])


def spectrum_cv(spec: DegeneracySpectrum) -> float:
    """Coefficient of variation (std/mean) of the underlying size list."""
    sizes = np.repeat(spec.k, spec.m).astype(np.float64)
    mean = sizes.mean()
    if mean == 0:
        raise ValueError("empty spectrum")
    return float(sizes.std() / mean)
