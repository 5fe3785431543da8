"""Unit tests for the closed-form moments and their MC cross-checks."""

import math

import numpy as np
import pytest

from ptl.errors import DomainError, ValidationError
from ptl.moments import (
    MomentConfig,
    first_moment,
    log_binom,
    log_second_moment,
    pair_structure_sum,
    pair_survival,
    second_moment,
    survivor_moments_mc,
    tail_upper_bound,
    weighted_moment_mc,
)
from ptl.rng import derive_seed, make_rng
from ptl.simulator import ModelParams, overlap_histogram, solution_set_at
from ptl.special_fn import critical_alpha, gaussian_mass, pair_prob

KAPPA = 1.0
P = gaussian_mass(KAPPA)


class TestFirstMoment:
    def test_no_constraints(self):
        assert first_moment(12, 0, KAPPA) == pytest.approx(2.0**12, rel=1e-14)

    def test_huge_kappa(self):
        for m in (0, 5, 50):
            assert first_moment(10, m, 40.0) == pytest.approx(2.0**10, rel=1e-12)

    def test_matches_mc(self):
        mc = survivor_moments_mc(10, 6, KAPPA, trials=3000, seed=31, threads=1)
        expected = first_moment(10, 6, KAPPA)
        assert abs(mc.mean - expected) <= 3.0 * mc.se_mean


class TestPairSurvival:
    def test_coincident_vectors(self):
        for m in (1, 4, 9):
            assert pair_survival(8, 8, m, KAPPA) == pytest.approx(P**m, rel=1e-12)

    def test_orthogonal_single_row(self):
        assert pair_survival(10, 0, 1, KAPPA) == pytest.approx(P * P, abs=1e-10)

    def test_symmetry_in_t(self):
        for t in (2, 4, 8):
            assert pair_survival(10, t, 1, KAPPA) == pytest.approx(
                pair_survival(10, -t, 1, KAPPA), rel=1e-11
            )

    def test_parity_validation(self):
        with pytest.raises(DomainError):
            pair_survival(10, 3, 1, KAPPA)
        with pytest.raises(DomainError):
            pair_survival(10, 12, 1, KAPPA)


class TestSecondMoment:
    def test_no_constraints_is_4_to_n(self):
        for n in (4, 9, 12):
            assert second_moment(n, 0, KAPPA) == pytest.approx(4.0**n, rel=1e-12)

    def test_cauchy_schwarz(self):
        # Up to float rounding of the log-space evaluation (1 ulp at m=0).
        for n in (8, 12, 16):
            for m in (0, 3, 10, 25):
                first = first_moment(n, m, KAPPA)
                assert second_moment(n, m, KAPPA) >= first * first * (1.0 - 1e-12)

    def test_diagonal_band_is_twice_first_moment(self):
        # The t = +-n terms are 2^n C(n, n) q(1)^m and 2^n C(n, 0) q(0)^m.
        n, m = 12, 7
        t_term = 2.0**n * pair_survival(n, n, m, KAPPA)
        assert 2.0 * t_term == pytest.approx(2.0 * first_moment(n, m, KAPPA), rel=1e-12)

    def test_logsumexp_matches_direct_summation(self):
        # Includes odd n, where valid overlaps are the odd t only.
        for n in (8, 9, 14, 20):
            m = 5
            direct = sum(
                2.0**n
                * math.comb(n, (n + t) // 2)
                * pair_prob((n + t) / (2.0 * n), KAPPA) ** m
                for t in range(-n, n + 1, 2)
            )
            assert math.exp(log_second_moment(n, m, KAPPA)) == pytest.approx(direct, rel=1e-10)

    def test_matches_mc(self):
        mc = survivor_moments_mc(10, 6, KAPPA, trials=3000, seed=32, threads=1)
        expected = second_moment(10, 6, KAPPA)
        assert abs(mc.second - expected) <= 3.0 * mc.se_second

    def test_ratio_trend_reported(self):
        # Normalized second moment at m = floor(alpha_c n): finite and modest.
        for n in (16, 20, 24):
            m = int(critical_alpha(KAPPA) * n)
            ratio = math.exp(
                log_second_moment(n, m, KAPPA) - 2.0 * math.log(first_moment(n, m, KAPPA))
            )
            assert 1.0 <= ratio < 50.0


class TestLogBinom:
    def test_exact_small(self):
        assert log_binom(20, 7) == pytest.approx(math.log(math.comb(20, 7)), rel=1e-15)

    def test_lgamma_beyond_limit_warns(self):
        with pytest.warns(RuntimeWarning):
            value = log_binom(80, 40)
        assert value == pytest.approx(math.log(math.comb(80, 40)), rel=1e-12)


class TestPairStructureSum:
    def test_empty_band_small_n(self):
        res = pair_structure_sum(4, 3, KAPPA)
        assert res.empty and res.value == 0.0

    def test_decreasing_in_m(self):
        values = [pair_structure_sum(16, m, KAPPA).value for m in (5, 10, 20, 30)]
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_matches_simulator_pair_counts(self):
        # Ordered full-cube pairs map 8-to-1 onto unordered representative
        # pairs with the same |overlap|, so the band sum divided by 8 is the
        # expected forbidden-band pair count per trial.
        n = 20
        m = int(critical_alpha(KAPPA) * n) - 3
        params = ModelParams(kappa=KAPPA, n=n)
        counts = []
        for i in range(800):
            s = solution_set_at(params, m, derive_seed(123, i))
            counts.append(overlap_histogram(s).forbidden_pairs)
        counts = np.asarray(counts, dtype=np.float64)
        expected = pair_structure_sum(n, m, KAPPA).value / 8.0
        se = counts.std(ddof=1) / math.sqrt(counts.size)
        assert abs(counts.mean() - expected) <= 3.0 * se


class TestTailUpperBound:
    def test_clamped_at_one(self):
        assert tail_upper_bound(14, 0, KAPPA) == 1.0

    def test_monotone_decreasing(self):
        values = [tail_upper_bound(14, t, KAPPA) for t in range(0, 60, 5)]
        assert all(b <= a for a, b in zip(values, values[1:]))

    def test_negative_t_rejected(self):
        with pytest.raises(DomainError):
            tail_upper_bound(14, -1, KAPPA)


class TestMomentConfig:
    def test_defaults(self):
        cfg = MomentConfig(n=20)
        alpha = critical_alpha(1.0)
        assert cfg.tau_pre == int(math.floor(alpha * 20 - 0.5 * math.log(20)))
        assert cfg.m == cfg.tau_pre
        assert cfg.L == pytest.approx(0.5 * math.log(20))

    def test_validation(self):
        with pytest.raises(ValidationError):
            MomentConfig(n=1)
        with pytest.raises(ValidationError):
            MomentConfig(n=20, K=4)
        with pytest.raises(ValidationError):
            MomentConfig(n=20, eta=-0.5)


class TestWeightedMomentMc:
    def test_degenerate_beta_gives_unit_ratios(self):
        cfg = MomentConfig(n=10, K=2)
        res = weighted_moment_mc(cfg, trials=50, seed=41, beta=0.0, threads=1)
        assert res.ratio1 == 1.0
        assert res.ratio2 == 1.0

    def test_desk_scale_bands(self):
        # Bands calibrated from pilot runs at n=20, K=3 (T=4000, three seeds:
        # ratio1 in 0.90..0.96, ratio2 in 0.68..0.81).  The weighted second
        # moment stays below its 1 + delta ceiling but sits well under 1 at
        # this n, so only the paper-directional upper edge is asserted.
        cfg = MomentConfig(n=20)
        res = weighted_moment_mc(cfg, trials=1200, seed=42)
        assert 0.8 <= res.ratio1 <= 1.05
        assert 0.3 <= res.ratio2 <= 1.3

    def test_sample_cauchy_schwarz_ordering(self):
        # Exact on shared samples: mean(Xw)^2 <= mean(X^2 w^2), i.e.
        # ratio1^2 mean(X)^2 <= ratio2 mean(X^2).
        from ptl.parallel import parallel_trials
        from ptl.moments import _weighted_trial
        from ptl.special_fn import beta as beta_fn

        cfg = MomentConfig(n=14)
        results = parallel_trials(_weighted_trial, 400, 1, 77, args=(cfg, beta_fn(KAPPA)))
        x = np.array([r[0] for r in results], dtype=np.float64)
        y = np.array([r[1] for r in results], dtype=np.float64)
        w = np.where(y >= -cfg.L, np.exp(-y), 1.0)
        lhs = (x * w).mean() ** 2
        rhs = (x * x * w * w).mean()
        assert lhs <= rhs * (1.0 + 1e-12)
