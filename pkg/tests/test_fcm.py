"""Tests for MMD-coupled fuzzy c-means."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.optimize import minimize

from deep_envelope.errors import ClusterCountError, DegenerateClusterError
from deep_envelope.fcm import (
    ClusterCache,
    FcmConfig,
    MembershipMatrix,
    center_system,
    cluster,
    farthest_point_init,
    linear_mmd,
    linear_mmd_trace,
    memberships,
    objective,
    solve_centers,
    stationarity_residual,
)


@pytest.fixture
def cfg():
    """Default clustering config."""
    return FcmConfig()


def random_memberships(rng, n_clusters, n_samples):
    u = rng.uniform(0.05, 1.0, size=(n_clusters, n_samples))
    return MembershipMatrix(u / u.sum(axis=0, keepdims=True))


class TestCenterSolve:
    """Test cases for the coupled prototype update."""

    def test_stationarity_on_random_instances(self, cfg):
        """Test solved prototypes zero the gradient and A is symmetric positive definite."""
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(2, 31))
            d = int(rng.integers(1, 9))
            c = int(rng.integers(1, min(5, n) + 1))
            samples = rng.normal(size=(n, d))
            u = random_memberships(rng, c, n)

            A, B = center_system(u, samples, cfg)
            p = solve_centers(A, B, n).p

            assert_array_equal(A, A.T)
            if np.all((u.u ** cfg.fuzzifier).sum(axis=1) > 1e-9):
                assert np.all(np.linalg.eigvalsh(A) > 0.0)
            assert np.all(stationarity_residual(samples, u, p, cfg) < 1e-8)

    def test_matches_numeric_minimizer(self, cfg):
        """Test the linear solve agrees with a quasi-Newton minimization over P."""
        rng = np.random.default_rng(5)
        for _ in range(10):
            n, d, c = 8, 3, 3
            samples = rng.normal(size=(n, d))
            u = random_memberships(rng, c, n)

            p = solve_centers(*center_system(u, samples, cfg)).p
            found = minimize(
                lambda flat: objective(samples, u, flat.reshape(c, d), cfg),
                np.zeros(c * d),
                method="BFGS",
                options={"gtol": 1e-10},
            )

            assert_allclose(found.x.reshape(c, d), p, atol=1e-4)

    def test_ablation_reduces_to_classic_update(self):
        """Test without the MMD term each center is the weighted mean of the samples."""
        rng = np.random.default_rng(1)
        ablated = FcmConfig(mmd=False)
        for _ in range(50):
            samples = rng.normal(size=(12, 3))
            u = random_memberships(rng, 4, 12)
            um = u.u ** ablated.fuzzifier

            p = solve_centers(*center_system(u, samples, ablated)).p

            expected = (um @ samples) / um.sum(axis=1, keepdims=True)
            assert_allclose(p, expected, rtol=0, atol=1e-12)

    def test_single_cluster_is_sample_mean(self, cfg):
        """Test C=1 yields the envelope mean under the coupled solve."""
        samples = np.array([[0.0, 1.0], [2.0, 3.0], [4.0, 11.0]])

        protos, u, _ = cluster(samples, 1, cfg)

        assert_allclose(protos.p, [[2.0, 5.0]], atol=1e-12)
        assert_array_equal(u.u, np.ones((1, 3)))

    def test_zero_mass_is_degenerate(self, cfg):
        """Test an empty cluster cannot be solved."""
        samples = np.array([[0.0], [1.0]])
        u = MembershipMatrix(np.array([[1.0, 1.0], [0.0, 0.0]]))

        with pytest.raises(DegenerateClusterError, match="degenerate cluster mass"):
            solve_centers(*center_system(u, samples, cfg))


class TestMemberships:
    """Test cases for memberships."""

    def test_columns_sum_to_one(self, cfg):
        """Test every sample's memberships sum to one."""
        rng = np.random.default_rng(2)
        samples = rng.normal(size=(9, 3))

        u = memberships(samples, samples[[0, 4]] + 0.1, cfg)

        assert_allclose(u.u.sum(axis=0), np.ones(9))

    def test_sample_on_center_is_crisp(self, cfg):
        """Test a sample coinciding with a center belongs to it fully."""
        samples = np.array([[0.0], [1.0], [5.0]])

        u = memberships(samples, np.array([[1.0], [5.0]]), cfg)

        assert_array_equal(u.u[:, 1], [1.0, 0.0])
        assert_array_equal(u.u[:, 2], [0.0, 1.0])

    def test_nan_rejected(self, cfg):
        """Test NaN input is refused."""
        with pytest.raises(ValueError):
            memberships(np.array([[np.nan]]), np.array([[0.0]]), cfg)


class TestCluster:
    """Test cases for the alternating clustering loop."""

    def test_objective_never_increases(self):
        """Test each alternation lowers or keeps the objective."""
        rng = np.random.default_rng(3)
        tight = FcmConfig(tol=1e-9)
        for _ in range(100):
            n = int(rng.integers(3, 16))
            samples = rng.normal(size=(n, int(rng.integers(1, 6))))

            _, _, trace = cluster(samples, n - 1, tight)

            steps = np.diff(trace.objective_per_iter)
            assert np.all(steps <= 1e-9)

    def test_reported_objective_matches_final_state(self, cfg):
        """Test the last traced objective is recomputable from the outputs."""
        rng = np.random.default_rng(4)
        samples = rng.normal(size=(10, 2))

        protos, u, trace = cluster(samples, 4, cfg)

        assert trace.final_objective == pytest.approx(objective(samples, u, protos.p, cfg))
        assert trace.converged

    def test_same_seed_same_result(self, cfg):
        """Test clustering is deterministic for a seed."""
        samples = np.random.default_rng(5).normal(size=(8, 3))

        first = cluster(samples, 5, cfg)[0].p
        second = cluster(samples, 5, cfg)[0].p

        assert_array_equal(first, second)

    def test_cluster_count_bounds(self, cfg):
        """Test C must lie in 1..N."""
        samples = np.zeros((3, 1))
        with pytest.raises(ClusterCountError):
            cluster(samples, 4, cfg)
        with pytest.raises(ClusterCountError):
            cluster(samples, 0, cfg)

    def test_farthest_point_init_is_distinct(self):
        """Test seeding picks distinct rows."""
        samples = np.random.default_rng(6).normal(size=(7, 2))

        chosen = farthest_point_init(samples, 6, seed=0)

        assert len(set(chosen.tolist())) == 6

    def test_farthest_point_init_skips_duplicate_rows(self):
        """Test seeding never picks two copies of the same row."""
        samples = np.array([[0.0], [0.0], [0.0], [1.0], [1.0], [2.0]])

        for seed in range(10):
            chosen = farthest_point_init(samples, 3, seed=seed)

            assert sorted(samples[chosen, 0].tolist()) == [0.0, 1.0, 2.0]

    def test_duplicated_samples_are_clustered(self, cfg):
        """Test repeated rows with as many distinct rows as clusters converge."""
        samples = np.array([[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [3.0, 1.0], [-2.0, 4.0]])

        protos, u, trace = cluster(samples, 3, cfg)

        assert protos.p.shape == (3, 2)
        assert np.all(u.u.sum(axis=1) > 0.0)
        assert trace.converged

    def test_fewer_distinct_samples_than_clusters(self, cfg):
        """Test the distinct rows come back padded when C exceeds them."""
        samples = np.array([[0.0], [0.0], [0.0], [1.0]])

        protos, u, trace = cluster(samples, 3, cfg)

        assert_array_equal(protos.p, [[0.0], [1.0], [0.0]])
        assert_array_equal(u.u, [[1, 1, 1, 0], [0, 0, 0, 1], [0, 0, 0, 0]])
        assert trace.iterations == 1
        assert trace.converged
        assert trace.final_objective == pytest.approx(objective(samples, u, protos.p, cfg))

    def test_cache_reuses_results(self, cfg):
        """Test identical envelopes are clustered once."""
        cache = ClusterCache()
        samples = np.random.default_rng(7).normal(size=(6, 2))

        first = cache.cluster(samples, 3, cfg)
        second = cache.cluster(samples.copy(), 3, cfg)

        assert first is second
        assert cache.hits == 1
        assert len(cache) == 1


class TestLinearMmd:
    """Test cases for the linear-kernel MMD."""

    def test_gram_and_trace_paths_agree(self):
        """Test the gram-sum and block-trace forms give the same statistic."""
        rng = np.random.default_rng(8)
        for _ in range(100):
            X = rng.normal(size=(int(rng.integers(1, 12)), 4))
            Y = rng.normal(size=(int(rng.integers(1, 12)), 4)) + rng.normal()

            gram = linear_mmd(X, Y)

            assert gram >= 0.0
            assert gram == pytest.approx(linear_mmd_trace(X, Y), abs=1e-10)

    def test_equals_squared_mean_gap(self):
        """Test the statistic is the squared distance between the means."""
        X = np.array([[0.0, 0.0], [2.0, 0.0]])
        Y = np.array([[1.0, 3.0]])

        assert linear_mmd(X, Y) == pytest.approx(9.0)

    def test_zero_for_identical_sets(self):
        """Test MMD(X, X) is zero."""
        X = np.random.default_rng(9).normal(size=(5, 3))

        assert linear_mmd(X, X) == pytest.approx(0.0, abs=1e-12)
