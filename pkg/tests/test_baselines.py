"""Lloyd k-means with k-means++ seeding and the cluster-size spectrum."""

import numpy as np
import numpy.testing as npt
import pytest

from critrep.linalg import Rng
from critrep.baselines import (
    cluster_size_spectrum,
    kmeans,
    spectrum_cv,
)
from critrep.representation import spectrum_from_sizes


def _three_blobs(per=40, seed=17):
    rng = Rng(seed)
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    pts = np.concatenate([
        c + 0.3 * rng.normals(per * 2).reshape(per, 2) for c in centers
    ])
    truth = np.repeat(np.arange(3), per)
    return pts, truth


class TestKMeans:
    def test_recovers_separated_blobs(self):
        pts, truth = _three_blobs()
        res = kmeans(pts, 3, Rng(5))
        assert res.converged
        # perfect purity: every found cluster maps to one true blob
        for j in range(3):
            members = truth[res.assignments == j]
            assert len(members) == 40
            assert len(np.unique(members)) == 1
        assert res.inertia < 100.0
        npt.assert_array_equal(np.sort(res.cluster_sizes), [40, 40, 40])

    def test_k_equals_n_gives_singletons(self):
        pts = Rng(9).uniforms(12).reshape(6, 2)
        res = kmeans(pts, 6, Rng(1))
        npt.assert_array_equal(np.sort(res.cluster_sizes), np.ones(6))
        assert res.inertia == pytest.approx(0.0, abs=1e-20)

    def test_no_empty_clusters(self):
        # k close to n forces the empty-cluster re-seeding path
        pts = Rng(2).uniforms(100).reshape(50, 2)
        res = kmeans(pts, 40, Rng(3))
        assert (res.cluster_sizes > 0).all()
        assert res.cluster_sizes.sum() == 50

    def test_sizes_sum_to_n(self):
        pts = Rng(4).uniforms(60).reshape(30, 2)
        res = kmeans(pts, 7, Rng(5))
        assert res.cluster_sizes.sum() == 30
        assert res.assignments.shape == (30,)
        assert res.centers.shape == (7, 2)

    def test_deterministic_given_seed(self):
        pts = Rng(6).uniforms(80).reshape(40, 2)
        a = kmeans(pts, 5, Rng(11))
        b = kmeans(pts, 5, Rng(11))
        npt.assert_array_equal(a.assignments, b.assignments)
        npt.assert_array_equal(a.centers, b.centers)

    def test_k_bounds(self):
        pts = np.zeros((4, 2))
        with pytest.raises(ValueError, match="k must be"):
            kmeans(pts, 0, Rng(1))
        with pytest.raises(ValueError, match="k must be"):
            kmeans(pts, 5, Rng(1))

    def test_inertia_is_sum_of_squared_residuals(self):
        pts, _ = _three_blobs(per=10)
        res = kmeans(pts, 3, Rng(5))
        manual = sum(
            ((pts[res.assignments == j] - res.centers[j]) ** 2).sum()
            for j in range(3)
        )
        assert res.inertia == pytest.approx(manual, rel=1e-12)


class TestSizeSpectrum:
    def test_spectrum_counts_sizes(self):
        pts, _ = _three_blobs()
        res = kmeans(pts, 3, Rng(5))
        spec = cluster_size_spectrum(res)
        npt.assert_array_equal(spec.k, [40])
        npt.assert_array_equal(spec.m, [3])
        assert spec.M == 120

    def test_cv_hand_values(self):
        # equal sizes: zero spread
        assert spectrum_cv(spectrum_from_sizes([1, 1, 1, 1])) == pytest.approx(0.0)
        # sizes 1 and 3: mean 2, population std 1
        assert spectrum_cv(spectrum_from_sizes([1, 3])) == pytest.approx(0.5)

    def test_uniform_partition_has_lower_cv_than_skewed(self):
        uniform = spectrum_from_sizes([5] * 20)
        skewed = spectrum_from_sizes([96, 1, 1, 1, 1])
        assert spectrum_cv(uniform) < spectrum_cv(skewed)
