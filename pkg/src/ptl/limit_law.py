"""The limiting threshold distribution and goodness-of-fit comparisons.

The centered threshold converges to the law

    P[tau <= k + alpha_c n] = E[exp(-e^{Z*} p^k / 2)],

where Z* is normal with mean log(1 - 4 beta^2)/4 and variance -2x that
mean, and k ranges over reals with k + alpha_c n integral.  Because
alpha_c n is non-integral, the law is always evaluated at k = j - shift
for integer j rather than at rounded offsets.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import (
    DomainError,
    NumericalInstabilityError,
    SampleSizeError,
    ValidationError,
)
from .rng import make_rng
from .simulator import ModelParams, ThresholdRecord, survivor_count_at
from .special_fn import Constants, DEFAULT_QUADRATURE, QuadratureConfig

__all__ = [
    "LimitLaw",
    "EmpiricalCdf",
    "LognormalFit",
    "limit_cdf",
    "limit_cdf_mc",
    "binomial_emptying",
    "empirical_cdf",
    "ks_distance",
    "ks_one_sample",
    "law_median",
    "tail_slope",
    "sample_from_law",
    "lognormal_fit",
    "empirical_moments",
]


@dataclass(frozen=True)
class LimitLaw:
    """Parameter pack of the limiting threshold CDF."""

    p: float
    zstar_mean: float
    zstar_var: float
    alpha_c: float

    def __post_init__(self) -> None:
        if not (0.0 < self.p < 1.0):
            raise DomainError(f"p must lie in (0, 1), got {self.p}")
        if self.zstar_var <= 0.0 or abs(self.zstar_var + 2.0 * self.zstar_mean) > 1e-12:
            raise DomainError("law requires zstar_var = -2 zstar_mean > 0")

    @classmethod
    def from_constants(cls, pack: Constants) -> "LimitLaw":
        return cls(pack.p, pack.zstar_mean, pack.zstar_var, pack.alpha_c)


_HERMITE_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _hermite_nodes(count: int) -> tuple[np.ndarray, np.ndarray]:
    if count not in _HERMITE_CACHE:
        nodes, weights = np.polynomial.hermite.hermgauss(count)
        _HERMITE_CACHE[count] = (nodes, weights / math.sqrt(math.pi))
    return _HERMITE_CACHE[count]


def _integrand(z, k: float, log_p: float):
    # exp(-e^{z + k log p} / 2) with the inner exponent clamped so that the
    # outer exp underflows to 0.0 instead of overflowing.
    w = np.minimum(z + k * log_p, 700.0)
    return np.exp(-0.5 * np.exp(w))


def limit_cdf(law: LimitLaw, k: float, quad: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """E[exp(-e^{Z*} p^k / 2)] by Gauss-Hermite quadrature over Z*.

    Cross-validated against adaptive quadrature; disagreement beyond 1e-8
    raises :class:`NumericalInstabilityError`.
    """
    k = float(k)
    if not math.isfinite(k):
        raise DomainError(f"k must be finite, got {k!r}")
    log_p = math.log(law.p)
    sd = math.sqrt(law.zstar_var)
    nodes, weights = _hermite_nodes(quad.hermite_nodes)
    z = law.zstar_mean + sd * math.sqrt(2.0) * nodes
    gh = float(weights @ _integrand(z, k, log_p))

    lo = law.zstar_mean - 10.0 * sd
    hi = law.zstar_mean + 10.0 * sd
    norm = 1.0 / (sd * math.sqrt(2.0 * math.pi))
    adaptive, _ = integrate.quad(
        lambda t: norm
        * math.exp(-0.5 * ((t - law.zstar_mean) / sd) ** 2)
        * float(_integrand(np.float64(t), k, log_p)),
        lo,
        hi,
        epsabs=quad.abs_tol,
        epsrel=quad.rel_tol,
        limit=quad.max_nodes,
    )
    if abs(gh - adaptive) > 1e-8:
        raise NumericalInstabilityError(
            f"limit_cdf({k}): Gauss-Hermite {gh!r} vs adaptive {adaptive!r} disagree"
        )
    return min(max(gh, 0.0), 1.0)


def limit_cdf_mc(
    law: LimitLaw, ks, samples: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo averages of exp(-e^{Z*} p^k / 2) with standard errors.

    One shared Z* sample is reused across all requested k.
    """
    ks = np.atleast_1d(np.asarray(ks, dtype=np.float64))
    rng = make_rng(seed)
    z = law.zstar_mean + math.sqrt(law.zstar_var) * rng.standard_normal(int(samples))
    log_p = math.log(law.p)
    means = np.empty(ks.size)
    ses = np.empty(ks.size)
    for i, k in enumerate(ks):
        vals = _integrand(z, float(k), log_p)
        means[i] = vals.mean()
        ses[i] = vals.std(ddof=1) / math.sqrt(vals.size)
    return means, ses


def binomial_emptying(count: int, survive_prob: float) -> float:
    """(1 - survive_prob)^count: chance a Bin(count, survive_prob) is zero."""
    if count < 0:
        raise DomainError(f"count must be nonnegative, got {count}")
    if not 0.0 <= survive_prob <= 1.0:
        raise DomainError(f"survive_prob must lie in [0, 1], got {survive_prob}")
    return (1.0 - survive_prob) ** count


@dataclass(frozen=True)
class EmpiricalCdf:
    """Sorted centered threshold sample (tau - shift)."""

    centered: np.ndarray
    shift: float

    @property
    def size(self) -> int:
        return self.centered.size

    def at(self, value: float) -> float:
        """Empirical CDF evaluated at a centered value."""
        return float(np.searchsorted(self.centered, value, side="right")) / self.size

    def median(self) -> float:
        return float(np.median(self.centered))


_MIN_RECORDS = 100


def empirical_cdf(records, shift: float) -> EmpiricalCdf:
    """Sorted tau - shift over records; conventionally shift = alpha_c n."""
    taus = np.array(
        [r.tau if isinstance(r, ThresholdRecord) else int(r) for r in records],
        dtype=np.float64,
    )
    if taus.size < _MIN_RECORDS:
        raise SampleSizeError(f"need at least {_MIN_RECORDS} records, got {taus.size}")
    if not np.all(np.isfinite(taus)):
        raise DomainError("thresholds must be finite")
    return EmpiricalCdf(np.sort(taus - float(shift)), float(shift))


def ks_distance(emp: EmpiricalCdf, law: LimitLaw) -> float:
    """sup over integer thresholds j of |F_emp(j) - limit_cdf(j - shift)|.

    The law is evaluated at the exact fractional offsets j - shift, honoring
    the k + alpha_c n integral convention.
    """
    taus = emp.centered + emp.shift
    j_lo = int(math.floor(taus.min())) - 5
    j_hi = int(math.ceil(taus.max())) + 5
    worst = 0.0
    for j in range(j_lo, j_hi + 1):
        gap = abs(emp.at(j - emp.shift) - limit_cdf(law, j - emp.shift))
        worst = max(worst, gap)
    return worst


def ks_one_sample(samples, cdf) -> float:
    """One-sample KS distance of ``samples`` against a continuous CDF callable."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    t = x.size
    if t == 0:
        raise ValidationError("KS distance needs at least one sample")
    f = np.asarray(cdf(x), dtype=np.float64)
    grid = np.arange(1, t + 1) / t
    return float(np.max(np.maximum(np.abs(f - grid), np.abs(f - (grid - 1.0 / t)))))


def law_median(law: LimitLaw, quad: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """The real k solving limit_cdf(k) = 1/2."""
    return float(
        optimize.brentq(lambda k: limit_cdf(law, k, quad) - 0.5, -60.0, 60.0, xtol=1e-10)
    )


def tail_slope(law: LimitLaw, k_lo: int = 10, k_hi: int = 20) -> float:
    """Least-squares slope of log(1 - CDF(k)) over integer k in [k_lo, k_hi].

    The upper tail is of exponential type, so the slope approaches log p.
    """
    ks = np.arange(k_lo, k_hi + 1, dtype=np.float64)
    logs = np.array([math.log(1.0 - limit_cdf(law, float(k))) for k in ks])
    slope, _ = np.polyfit(ks, logs, 1)
    return float(slope)


def sample_from_law(law: LimitLaw, shift: float, trials: int, seed: int) -> np.ndarray:
    """Integer thresholds drawn from the law by inverse-CDF sampling."""
    if trials < 1:
        raise ValidationError(f"trials must be >= 1, got {trials}")
    j = int(math.floor(shift)) - 80
    grid = []
    cdfs = []
    while True:
        c = limit_cdf(law, j - shift)
        if c >= 1.0 - 1e-12 and cdfs and cdfs[-1] >= 1.0 - 1e-12:
            break
        grid.append(j)
        cdfs.append(c)
        j += 1
        if j - shift > 200:
            break
    grid = np.array(grid)
    cdfs = np.array(cdfs)
    u = make_rng(seed).random(trials)
    return grid[np.searchsorted(cdfs, u, side="left")]


@dataclass(frozen=True)
class LognormalFit:
    """KS distance of log(X / E X) at tau_pre against the Z* normal."""

    ks: float
    excluded: int
    trials: int
    regime_warning: bool


def _lognormal_trial(params: ModelParams, tau_pre: int, seed: int) -> int:
    return survivor_count_at(params, tau_pre, seed)


def lognormal_fit(
    params: ModelParams,
    tau_pre: int,
    trials: int,
    seed: int,
    zstar: tuple[float, float] | None = None,
    threads: int | None = None,
) -> LognormalFit:
    """Fit of the log survivor-count fluctuation at tau_pre to its normal limit.

    Collects X over trials, drops X = 0 trials (counted; Z* presumes
    survival), and compares log(X / 2^n p^tau_pre) against N(zstar).  A
    zero-variance ``zstar`` compares against a point mass instead.
    """
    from .moments import log_first_moment
    from .parallel import parallel_trials
    from .special_fn import constants, normal_cdf

    if tau_pre < 1:
        raise ValidationError(f"tau_pre must be >= 1, got {tau_pre}")
    if zstar is None:
        pack = constants(params.kappa)
        zstar = (pack.zstar_mean, pack.zstar_var)
    mean, var = zstar
    counts = np.array(
        parallel_trials(_lognormal_trial, trials, threads, seed, args=(params, tau_pre)),
        dtype=np.float64,
    )
    excluded = int((counts == 0).sum())
    kept = counts[counts > 0]
    if kept.size < _MIN_RECORDS:
        raise SampleSizeError(f"only {kept.size} nonempty trials at tau_pre={tau_pre}")
    z = np.log(kept) - log_first_moment(params.n, tau_pre, params.kappa)
    if var == 0.0:
        below = float((z < mean).mean())
        above = float((z > mean).mean())
        ks = max(below, above)
    else:
        sd = math.sqrt(var)
        ks = ks_one_sample(z, lambda x: normal_cdf((x - mean) / sd))
    warn = excluded > 0.2 * trials
    if warn:
        warnings.warn(
            f"{excluded}/{trials} trials empty at tau_pre={tau_pre}; "
            "tau_pre is too deep for the log-normal regime",
            RuntimeWarning,
            stacklevel=2,
        )
    return LognormalFit(float(ks), excluded, int(trials), warn)


def empirical_moments(taus, shift: float) -> tuple[float, float, float]:
    """(mean, variance, se_mean) of tau - shift over a threshold sample."""
    x = np.asarray(taus, dtype=np.float64) - float(shift)
    if x.size < 2:
        raise SampleSizeError("need at least two thresholds")
    return float(x.mean()), float(x.var(ddof=1)), float(x.std(ddof=1) / math.sqrt(x.size))
