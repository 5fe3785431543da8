"""Closed-form solution-count moments and their Monte Carlo cross-checks.

The survivor count X after m rows has E[X] = 2^n p^m, and its second
moment decomposes over signed overlaps t (same parity as n):

    E[X^2] = sum_t 2^n C(n, (n+t)/2) q((n+t)/(2n))^m.

All formulas are evaluated in natural-log space with log-sum-exp; exact
integer binomials are used up to n = 60 and lgamma beyond (flagged).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError, SampleSizeError, ValidationError
from .rng import make_rng
from .simulator import ModelParams, survivor_count, survivor_count_at
from .special_fn import critical_alpha, gaussian_mass, pair_prob

__all__ = [
    "MomentConfig",
    "PairStructureSum",
    "WeightedMomentResult",
    "SurvivorMoments",
    "EXACT_BINOM_LIMIT",
    "log_binom",
    "first_moment",
    "log_first_moment",
    "pair_survival",
    "second_moment",
    "log_second_moment",
    "pair_structure_sum",
    "tail_upper_bound",
    "weighted_moment_mc",
    "survivor_moments_mc",
]

EXACT_BINOM_LIMIT = 60


def log_binom(n: int, k: int) -> float:
    """log C(n, k); exact integer binomial up to n = 60, lgamma beyond."""
    if not 0 <= k <= n:
        raise DomainError(f"need 0 <= k <= n, got n={n}, k={k}")
    if n <= EXACT_BINOM_LIMIT:
        return math.log(math.comb(n, k))
    warnings.warn(
        f"n={n} > {EXACT_BINOM_LIMIT}: binomials via lgamma (approximate)",
        RuntimeWarning,
        stacklevel=2,
    )
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def log_first_moment(n: int, m: int, kappa: float) -> float:
    """log E[X] = n log 2 + m log p."""
    if n < 1 or m < 0:
        raise DomainError(f"need n >= 1 and m >= 0, got n={n}, m={m}")
    return n * math.log(2.0) + m * math.log(gaussian_mass(kappa))


def first_moment(n: int, m: int, kappa: float) -> float:
    """E[X] = 2^n p^m, evaluated in log space."""
    return math.exp(log_first_moment(n, m, kappa))


def _check_overlap(n: int, t: int) -> None:
    if abs(t) > n or (n + t) % 2 != 0:
        raise DomainError(f"overlap t={t} needs |t| <= n and t = n (mod 2) at n={n}")


def pair_survival(n: int, t: int, m: int, kappa: float) -> float:
    """P[v_n and v_t both survive m rows] = q((n+t)/(2n))^m."""
    _check_overlap(n, t)
    if m < 0:
        raise DomainError(f"m must be nonnegative, got {m}")
    q = pair_prob((n + t) / (2.0 * n), kappa)
    return math.exp(m * math.log(q))


def _log_pair_terms(n: int, m: int, kappa: float, ts: np.ndarray) -> np.ndarray:
    log2n = n * math.log(2.0)
    out = np.empty(ts.size)
    for i, t in enumerate(ts):
        q = pair_prob((n + int(t)) / (2.0 * n), kappa)
        out[i] = log2n + log_binom(n, (n + int(t)) // 2) + m * math.log(q)
    return out


def log_second_moment(n: int, m: int, kappa: float) -> float:
    """log E[X^2] via log-sum-exp over the overlap decomposition."""
    if n < 1 or m < 0:
        raise DomainError(f"need n >= 1 and m >= 0, got n={n}, m={m}")
    ts = np.arange(-n, n + 1, 2)
    return float(logsumexp(_log_pair_terms(n, m, kappa, ts)))


def second_moment(n: int, m: int, kappa: float) -> float:
    """E[X^2] = sum_t 2^n C(n,(n+t)/2) q((n+t)/(2n))^m."""
    return math.exp(log_second_moment(n, m, kappa))


@dataclass(frozen=True)
class PairStructureSum:
    """Overlap-decomposition mass restricted to the forbidden band."""

    value: float
    band_lo: int
    band_hi: int
    empty: bool
    reference_bound: float


def pair_structure_sum(n: int, m: int, kappa: float) -> PairStructureSum:
    """The second-moment sum restricted to sqrt(n) log n <= |t| <= n-1.

    Reported alongside exp(-(log n)^{3/2}) for qualitative comparison.
    Returns value 0 with ``empty=True`` when the band holds no valid t.
    """
    if n < 2 or m < 0:
        raise DomainError(f"need n >= 2 and m >= 0, got n={n}, m={m}")
    band_lo = int(math.ceil(math.sqrt(n) * math.log(n)))
    band_hi = n - 1
    reference = math.exp(-math.log(n) ** 1.5)
    ts = np.arange(-n, n + 1, 2)
    ts = ts[(np.abs(ts) >= band_lo) & (np.abs(ts) <= band_hi)]
    if ts.size == 0:
        return PairStructureSum(0.0, band_lo, band_hi, True, reference)
    value = float(np.exp(logsumexp(_log_pair_terms(n, m, kappa, ts))))
    return PairStructureSum(value, band_lo, band_hi, False, reference)


def tail_upper_bound(n: int, t: int, kappa: float) -> float:
    """min(1, 2^n p^t), the first-moment bound on P[S_t nonempty]."""
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    return math.exp(min(0.0, log_first_moment(n, t, kappa)))


@dataclass(frozen=True)
class MomentConfig:
    """Shared configuration for the weighted-moment Monte Carlo.

    ``tau_pre`` defaults to floor(alpha_c n - eta log n) and the truncation
    level L to eta log n; eta is a user knob, never hard-coded into
    assertions.
    """

    n: int
    kappa: float = 1.0
    eta: float = 0.5
    tau_pre: int | None = None
    m: int | None = None
    K: int = 3
    L: float | None = None

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValidationError(f"n must be >= 2, got {self.n}")
        if not 1 <= self.K <= 3:
            raise ValidationError(f"K must be in 1..3, got {self.K}")
        if self.eta <= 0:
            raise ValidationError(f"eta must be positive, got {self.eta}")
        alpha = critical_alpha(self.kappa)
        if self.tau_pre is None:
            object.__setattr__(
                self, "tau_pre", int(math.floor(alpha * self.n - self.eta * math.log(self.n)))
            )
        if self.m is None:
            object.__setattr__(self, "m", self.tau_pre)
        if self.L is None:
            object.__setattr__(self, "L", self.eta * math.log(self.n))
        if self.tau_pre < 1:
            raise ValidationError(f"tau_pre must be >= 1, got {self.tau_pre}")
        if self.m < 1:
            raise ValidationError(f"m must be >= 1, got {self.m}")
        if self.L <= 0:
            raise ValidationError(f"L must be positive, got {self.L}")


@dataclass(frozen=True)
class WeightedMomentResult:
    """Normalized weighted-moment ratios with delta-method standard errors."""

    ratio1: float
    ratio2: float
    se1: float
    se2: float
    trials: int


def _weighted_trial(config: MomentConfig, beta: float, seed: int):
    from .cycle_stats import cycle_counts, weighted_count

    rng = make_rng(seed)
    params = ModelParams(kappa=config.kappa, n=config.n)
    rows = rng.standard_normal((config.m, config.n))
    x = survivor_count(params, rows)
    y = weighted_count(cycle_counts(rows, config.K), beta, config.K)
    return x, y


def _ratio_with_se(num: np.ndarray, den: np.ndarray) -> tuple[float, float]:
    t = num.size
    den_mean = den.mean()
    if den_mean == 0.0:
        raise SampleSizeError("all trials produced empty solution sets")
    r = num.mean() / den_mean
    cov = np.cov(num, den, ddof=1)
    var_r = (cov[0, 0] - 2.0 * r * cov[0, 1] + r * r * cov[1, 1]) / (t * den_mean**2)
    return float(r), float(math.sqrt(max(var_r, 0.0)))


def weighted_moment_mc(
    config: MomentConfig,
    trials: int,
    seed: int,
    beta: float | None = None,
    threads: int | None = None,
) -> WeightedMomentResult:
    """Monte Carlo estimates of E[X e^{-Y 1[Y >= -L]}]/E[X] and
    E[X^2 e^{-2Y 1[Y >= -L]}]/E[X^2] on shared samples.
    """
    from .parallel import parallel_trials
    from .special_fn import beta as beta_fn

    if beta is None:
        beta = beta_fn(config.kappa)
    results = parallel_trials(_weighted_trial, trials, threads, seed, args=(config, beta))
    x = np.array([r[0] for r in results], dtype=np.float64)
    y = np.array([r[1] for r in results], dtype=np.float64)
    w = np.where(y >= -config.L, np.exp(-y), 1.0)
    ratio1, se1 = _ratio_with_se(x * w, x)
    ratio2, se2 = _ratio_with_se(x * x * w * w, x * x)
    return WeightedMomentResult(ratio1, ratio2, se1, se2, x.size)


@dataclass(frozen=True)
class SurvivorMoments:
    """Sample moments of the survivor count X over Monte Carlo trials."""

    mean: float
    second: float
    se_mean: float
    se_second: float
    trials: int


def _survivor_trial(params: ModelParams, m: int, seed: int) -> int:
    return survivor_count_at(params, m, seed)


def survivor_moments_mc(
    n: int,
    m: int,
    kappa: float,
    trials: int,
    seed: int,
    threads: int | None = None,
) -> SurvivorMoments:
    """Monte Carlo E[X] and E[X^2] for comparison against the formulas."""
    from .parallel import parallel_trials

    params = ModelParams(kappa=kappa, n=n)
    xs = np.array(
        parallel_trials(_survivor_trial, trials, threads, seed, args=(params, int(m))),
        dtype=np.float64,
    )
    t = xs.size
    x2 = xs * xs
    return SurvivorMoments(
        mean=float(xs.mean()),
        second=float(x2.mean()),
        se_mean=float(xs.std(ddof=1) / math.sqrt(t)),
        se_second=float(x2.std(ddof=1) / math.sqrt(t)),
        trials=t,
    )
