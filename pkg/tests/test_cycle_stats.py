"""Unit tests for the cycle-count statistics."""

import math

import numpy as np
import pytest

from helpers import brute_cycle_count
from ptl.cycle_stats import (
    CycleVector,
    block_means,
    clt_diagnostic,
    cycle_count,
    cycle_counts,
    cycle_vector,
    decomposed_cycle_count,
    ks_to_standard_normal,
    mc_cycle_moments,
    mean_shift,
    weighted_count,
    weighted_tail_bound,
)
from ptl.errors import DomainError
from ptl.rng import make_rng
from ptl.simulator import NULL, SINGLE, PlantedKind
from ptl.special_fn import beta as beta_fn


class TestCycleCount:
    def test_zero_matrix_k1(self):
        assert cycle_count(np.zeros((3, 4)), 1) == pytest.approx(-math.sqrt(12.0))

    def test_sign_matrix_k1_cancels(self):
        rng = make_rng(0)
        signs = rng.choice([-1.0, 1.0], size=(5, 7))
        assert cycle_count(signs, 1) == pytest.approx(0.0, abs=1e-12)

    def test_all_ones_k2(self):
        # (n-1)(m-1) at m=2, n=3.
        assert cycle_count(np.ones((2, 3)), 2) == pytest.approx(2.0)

    def test_random_k3_against_brute_force(self):
        mat = make_rng(1).standard_normal((4, 5))
        assert cycle_count(mat, 3) == pytest.approx(brute_cycle_count(mat, 3), abs=1e-9)

    @pytest.mark.parametrize("seed", range(6))
    def test_brute_force_equivalence_small(self, seed):
        rng = make_rng(1000 + seed)
        m = int(rng.integers(3, 7))
        n = int(rng.integers(3, 7))
        mat = rng.standard_normal((m, n))
        for k in (1, 2, 3):
            assert cycle_count(mat, k) == pytest.approx(
                brute_cycle_count(mat, k), abs=1e-9 * max(1.0, abs(brute_cycle_count(mat, k)))
            )

    def test_unsupported_order(self):
        with pytest.raises(DomainError):
            cycle_count(np.ones((5, 5)), 4)
        with pytest.raises(DomainError):
            cycle_count(np.ones((2, 5)), 3)

    def test_permutation_invariance(self):
        rng = make_rng(2)
        mat = rng.standard_normal((5, 6))
        rows = rng.permutation(5)
        cols = rng.permutation(6)
        for k in (1, 2, 3):
            assert cycle_count(mat[rows], k) == pytest.approx(cycle_count(mat, k), rel=1e-12)
            assert cycle_count(mat[:, cols], k) == pytest.approx(cycle_count(mat, k), rel=1e-12)

    def test_negation_invariance(self):
        mat = make_rng(3).standard_normal((5, 6))
        for k in (1, 2, 3):
            assert cycle_count(-mat, k) == pytest.approx(cycle_count(mat, k), rel=1e-12)

    def test_cycle_counts_matches_scalar(self):
        mat = make_rng(4).standard_normal((6, 6))
        stacked = cycle_counts(mat, 3)
        for k in (1, 2, 3):
            assert stacked[k - 1] == pytest.approx(cycle_count(mat, k), rel=1e-12)


class TestWeightedCount:
    def test_zero_counts(self):
        beta = -0.4
        for K in (1, 2, 3):
            expected = -sum((2 * beta) ** (2 * k) / (4 * k) for k in range(1, K + 1))
            assert weighted_count(np.zeros(K), beta, K) == pytest.approx(expected)

    def test_geometric_counts(self):
        beta = -0.35
        K = 3
        c = np.array([(2 * beta) ** k for k in range(1, K + 1)])
        expected = sum((2 * beta) ** (2 * k) / (4 * k) for k in range(1, K + 1))
        assert weighted_count(c, beta, K) == pytest.approx(expected)

    def test_series_limit(self):
        # With C_k = (2 beta)^k the partial sums converge to -log(1-4b^2)/4.
        beta = -0.3
        K = 200
        c = np.array([(2 * beta) ** k for k in range(1, K + 1)])
        limit = -0.25 * math.log1p(-4.0 * beta * beta)
        assert weighted_count(c, beta, K) == pytest.approx(limit, abs=1e-12)

    def test_tail_bound_completes_partial_sum(self):
        beta = -0.45
        for K in (1, 2, 3):
            ks = np.arange(1, K + 1)
            head = ((2 * beta) ** (2 * ks) / (4 * ks)).sum()
            total = -0.25 * math.log1p(-4.0 * beta * beta)
            assert head + weighted_tail_bound(beta, K) == pytest.approx(total, rel=1e-12)

    def test_k_exceeds_supplied(self):
        with pytest.raises(DomainError):
            weighted_count(np.zeros(2), -0.4, 3)


class TestCycleVector:
    def test_construction_consistent(self):
        mat = make_rng(5).standard_normal((8, 9))
        beta = beta_fn(1.0)
        cv = cycle_vector(mat, 3, beta)
        assert cv.y == pytest.approx(weighted_count(cv.c, beta, 3), rel=1e-12)
        np.testing.assert_allclose(cv.v, cv.c / np.sqrt(2.0 * np.arange(1, 4)))

    def test_tampered_aggregate_rejected(self):
        mat = make_rng(6).standard_normal((8, 9))
        beta = beta_fn(1.0)
        cv = cycle_vector(mat, 2, beta)
        with pytest.raises(DomainError):
            CycleVector(K=2, beta=beta, c=cv.c, y=cv.y + 1.0, v=cv.v)

    def test_mean_shift_decay(self):
        mu = mean_shift(beta_fn(1.0), 3)
        two_beta = abs(2.0 * beta_fn(1.0))
        assert abs(mu[1] / mu[0]) < two_beta
        assert abs(mu[2] / mu[1]) < two_beta


class TestDecomposedCycleCount:
    @pytest.mark.parametrize("k", [1, 2])
    @pytest.mark.parametrize("t", [0, 2, -2])
    def test_reconstruction_identity(self, k, t):
        for seed in range(5):
            mat = make_rng(40 + seed).standard_normal((5, 6))
            value = decomposed_cycle_count(mat, k, t, block_means(mat, t))
            assert value == pytest.approx(cycle_count(mat, k), abs=1e-9)

    def test_zero_sigma_on_centered_matrix(self):
        mat = make_rng(50).standard_normal((5, 6))
        t = 0
        own = block_means(mat, t)
        centered = mat.copy()
        centered[:, :3] -= own[:, :1]
        centered[:, 3:] -= own[:, 1:]
        value = decomposed_cycle_count(mat, 2, t, np.zeros((5, 2)))
        assert value == pytest.approx(cycle_count(centered, 2), rel=1e-9)

    def test_zero_matrix_zero_sigma_k1(self):
        assert decomposed_cycle_count(np.zeros((4, 6)), 1, 0, np.zeros((4, 2))) == pytest.approx(
            -math.sqrt(24.0)
        )

    def test_parity_validation(self):
        mat = np.zeros((3, 6))
        with pytest.raises(DomainError):
            decomposed_cycle_count(mat, 1, 3, np.zeros((3, 2)))
        with pytest.raises(DomainError):
            decomposed_cycle_count(mat, 3, 0, np.zeros((3, 2)))


class TestKs:
    def test_standard_normal_sample_small_distance(self):
        z = make_rng(7).standard_normal(4000)
        assert ks_to_standard_normal(z) < 0.03

    def test_shifted_sample_large_distance(self):
        z = make_rng(8).standard_normal(4000) + 2.0
        assert ks_to_standard_normal(z) > 0.5

    def test_against_scipy(self):
        from scipy import stats

        z = make_rng(9).standard_normal(500) * 1.3 + 0.2
        ours = ks_to_standard_normal(z)
        theirs = stats.kstest(z, "norm").statistic
        assert ours == pytest.approx(theirs, abs=1e-12)


class TestMonteCarlo:
    def test_null_small_n(self):
        mc = mc_cycle_moments(NULL, n=120, m=200, k=1, trials=600, seed=11)
        assert abs(mc.mean) <= 4.0 * mc.se_mean
        assert abs(mc.variance - 2.0) <= 4.0 * mc.se_variance

    def test_single_mean_shift_small_n(self):
        beta = beta_fn(1.0)
        mc = mc_cycle_moments(SINGLE, n=200, m=363, k=1, trials=600, seed=12)
        # (2 beta)^1 with an O(1/n) correction; 4 SE at desk scale.
        assert abs(mc.mean - 2.0 * beta) <= 4.0 * mc.se_mean

    def test_pair_mean_shift_small_n(self):
        beta = beta_fn(1.0)
        mc = mc_cycle_moments(PlantedKind.pair(0), n=200, m=363, k=1, trials=600, seed=13)
        assert abs(mc.mean - 2.0 * (2.0 * beta)) <= 4.0 * mc.se_mean

    def test_clt_diagnostic_null(self):
        diag = clt_diagnostic(NULL, n=200, m=363, K=2, trials=500, seed=14)
        assert diag.ks.shape == (2,)
        assert (diag.ks < 0.08).all()
        assert abs(diag.correlations[0, 1]) < 0.15

    def test_clt_diagnostic_single_centered(self):
        diag = clt_diagnostic(SINGLE, n=200, m=363, K=2, trials=500, seed=15)
        assert (diag.ks < 0.09).all()

    def test_clt_diagnostic_full_scale(self):
        # Tolerance 1.36/sqrt(trials) plus a finite-n allowance.
        from ptl.special_fn import critical_alpha

        m = int(critical_alpha(1.0) * 400)
        for kind in (NULL, SINGLE):
            diag = clt_diagnostic(kind, n=400, m=m, K=2, trials=2000, seed=777)
            assert (diag.ks <= 0.05).all()
            assert abs(diag.correlations[0, 1]) <= 0.1
