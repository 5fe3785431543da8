"""Closed-form constants and special functions of the symmetric perceptron.

Everything here is a pure function of the margin ``kappa`` (and, for the
pair probability, the overlap parameter ``gamma``).  The conventions:

* ``p``        -- mass of a standard Gaussian in ``[-kappa, kappa]``
* ``alpha_c``  -- critical constraint density ``-log 2 / log p``
* ``mu2``      -- truncated second moment ``E[Z^2 1_{|Z|<=kappa}] / p``
* ``beta``     -- ``-(sqrt(alpha_c)/2) (1 - mu2)``, always in ``(-1/2, 0)``
* ``q(gamma)`` -- probability that two correlated Gaussian margins with
  correlation ``2*gamma - 1`` both land in ``[-kappa, kappa]``

Normal distributions are parameterized as (mean, variance) throughout.
One-dimensional integrals use adaptive Gauss-Kronrod quadrature; ``p``
itself goes through ``erf`` so that it saturates exactly at 1.0 for large
margins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, linalg

from .errors import DomainError, NumericalInstabilityError

__all__ = [
    "QuadratureConfig",
    "Constants",
    "BinomBounds",
    "DEFAULT_QUADRATURE",
    "gaussian_mass",
    "critical_alpha",
    "mu2",
    "beta",
    "pair_prob",
    "binary_entropy",
    "rate_function",
    "gaussian_kl",
    "tv_bound",
    "binom_bounds",
    "zstar_params",
    "constants",
    "normal_pdf",
    "normal_cdf",
    "second_derivative",
]

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# |z| beyond this contributes < 1e-22 to any Gaussian integral we evaluate,
# far below the tightest tolerance used anywhere in the package.
_GAUSS_CUTOFF = 12.0


@dataclass(frozen=True)
class QuadratureConfig:
    """Tolerances and node counts for the quadrature-backed operations."""

    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_nodes: int = 200
    hermite_nodes: int = 64

    def __post_init__(self) -> None:
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise DomainError("quadrature tolerances must be positive")
        if self.max_nodes < 16 or self.hermite_nodes < 16:
            raise DomainError("quadrature node counts must be >= 16")


DEFAULT_QUADRATURE = QuadratureConfig()


def normal_pdf(x):
    """Standard normal density, vectorized."""
    x = np.asarray(x, dtype=np.float64)
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def normal_cdf(x):
    """Standard normal CDF via ``erf``, vectorized."""
    return 0.5 * (1.0 + np.vectorize(math.erf)(np.asarray(x, dtype=np.float64) / _SQRT2))


def _check_kappa(kappa: float) -> float:
    kappa = float(kappa)
    if not math.isfinite(kappa) or kappa <= 0.0:
        raise DomainError(f"kappa must be a positive finite real, got {kappa!r}")
    return kappa


def gaussian_mass(kappa: float) -> float:
    """P[|Z| <= kappa] for a standard Gaussian Z.

    Evaluated as ``erf(kappa / sqrt 2)``, which rounds to exactly 1.0 once
    the excluded tail falls below machine precision (kappa >~ 9).
    """
    kappa = _check_kappa(kappa)
    return math.erf(kappa / _SQRT2)


def critical_alpha(kappa: float) -> float:
    """Critical density ``-log 2 / log p``.

    Returns ``inf`` when ``p`` rounds to 1.0 in double precision (very
    large margins); callers that need a finite row budget must then supply
    one explicitly.
    """
    p = gaussian_mass(kappa)
    log_p = math.log(p)
    if log_p == 0.0:
        return math.inf
    return -math.log(2.0) / log_p


def mu2(kappa: float, quad: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """Truncated second moment ``E[Z^2 1_{|Z|<=kappa}] / p`` by quadrature."""
    kappa = _check_kappa(kappa)
    upper = min(kappa, _GAUSS_CUTOFF)
    num, _ = integrate.quad(
        lambda z: z * z * _INV_SQRT_2PI * math.exp(-0.5 * z * z),
        0.0,
        upper,
        epsabs=0.5 * quad.abs_tol,
        epsrel=quad.rel_tol,
        limit=quad.max_nodes,
    )
    return 2.0 * num / gaussian_mass(kappa)


def beta(kappa: float, quad: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """The coefficient ``-(sqrt(alpha_c)/2)(1 - mu2)``.

    The value provably lies in (-1/2, 0); landing outside that interval
    (beyond quadrature tolerance) means the quadrature failed, which is
    reported rather than propagated silently.
    """
    value = -0.5 * math.sqrt(critical_alpha(kappa)) * (1.0 - mu2(kappa, quad))
    slack = 100.0 * quad.abs_tol
    if not (-0.5 - slack < value < 0.0 + slack):
        raise NumericalInstabilityError(
            f"beta({kappa}) = {value} falls outside (-1/2, 0); quadrature failure"
        )
    return value


def pair_prob(gamma: float, kappa: float, quad: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """Pair probability q(gamma) for two correlated Gaussian margins.

    q(gamma) = P[|sqrt(g) Z1 + sqrt(1-g) Z2| <= kappa
                and |sqrt(g) Z1 - sqrt(1-g) Z2| <= kappa].

    Reduced to a single outer integral over z1: for fixed z1 with
    ``a = sqrt(gamma) z1``, the two constraints intersect to the symmetric
    interval ``|Z2| <= (kappa - |a|) / sqrt(1 - gamma)``, empty unless
    ``|a| <= kappa``.
    """
    gamma = float(gamma)
    kappa = _check_kappa(kappa)
    if not (0.0 <= gamma <= 1.0):
        raise DomainError(f"gamma must lie in [0, 1], got {gamma!r}")
    if gamma == 0.0 or gamma == 1.0:
        # Degenerate rotations: one constraint repeats the other.
        return gaussian_mass(kappa)

    sqrt_g = math.sqrt(gamma)
    sqrt_1mg = math.sqrt(1.0 - gamma)
    limit = min(kappa / sqrt_g, _GAUSS_CUTOFF)

    def integrand(z1: float) -> float:
        inner = (kappa - abs(sqrt_g * z1)) / sqrt_1mg
        if inner <= 0.0:
            return 0.0
        # P[|Z2| <= inner] = erf(inner / sqrt 2)
        return _INV_SQRT_2PI * math.exp(-0.5 * z1 * z1) * math.erf(inner / _SQRT2)

    value, _ = integrate.quad(
        integrand,
        -limit,
        limit,
        epsabs=quad.abs_tol,
        epsrel=quad.rel_tol,
        limit=quad.max_nodes,
    )
    return min(value, 1.0)


def binary_entropy(x: float) -> float:
    """Binary entropy ``-x log x - (1-x) log(1-x)`` in nats, 0 log 0 = 0."""
    x = float(x)
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"entropy argument must lie in [0, 1], got {x!r}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log(x) - (1.0 - x) * math.log(1.0 - x)


def rate_function(gamma: float, kappa: float, quad: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """Exponential rate ``H(gamma) + alpha_c log q(gamma)``.

    At the endpoints the continuous extension is used:
    ``F(0) = F(1) = alpha_c log p = -log 2``.
    """
    gamma = float(gamma)
    if not (0.0 <= gamma <= 1.0):
        raise DomainError(f"gamma must lie in [0, 1], got {gamma!r}")
    alpha = critical_alpha(kappa)
    if gamma == 0.0 or gamma == 1.0:
        return alpha * math.log(gaussian_mass(kappa))
    return binary_entropy(gamma) + alpha * math.log(pair_prob(gamma, kappa, quad))


def _check_spd(sigma: np.ndarray, name: str) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise DomainError(f"{name} must be a square matrix, got shape {sigma.shape}")
    if not np.allclose(sigma, sigma.T, atol=1e-10, rtol=1e-10):
        raise DomainError(f"{name} must be symmetric")
    return sigma


def gaussian_kl(sigma1, sigma2) -> float:
    """KL divergence between centered Gaussians with covariances sigma1, sigma2.

    KL(N(0,S1) || N(0,S2)) = (log det(S2 S1^{-1}) - d + tr(S2^{-1} S1)) / 2.
    Raises :class:`DomainError` unless both matrices are symmetric positive
    definite of equal dimension.
    """
    s1 = _check_spd(sigma1, "sigma1")
    s2 = _check_spd(sigma2, "sigma2")
    if s1.shape != s2.shape:
        raise DomainError("covariance matrices must have equal dimension")
    d = s1.shape[0]
    try:
        chol1 = linalg.cholesky(s1, lower=True)
        chol2 = linalg.cholesky(s2, lower=True)
    except linalg.LinAlgError as exc:
        raise DomainError(f"covariance matrix is not positive definite: {exc}") from exc
    logdet1 = 2.0 * math.fsum(math.log(x) for x in np.diag(chol1))
    logdet2 = 2.0 * math.fsum(math.log(x) for x in np.diag(chol2))
    # tr(S2^{-1} S1) = || L2^{-1} L1 ||_F^2
    solved = linalg.solve_triangular(chol2, chol1, lower=True)
    trace = float((solved * solved).sum())
    kl = 0.5 * (logdet2 - logdet1 - d + trace)
    return max(kl, 0.0)


def tv_bound(sigma1, sigma2) -> float:
    """Pinsker bound ``sqrt(KL / 2)`` on the total variation distance."""
    return math.sqrt(gaussian_kl(sigma1, sigma2) / 2.0)


def _safe_exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


@dataclass(frozen=True)
class BinomBounds:
    """Entropy upper bound and (near-central) Gaussian approximation of C(n,k).

    Both quantities are carried in log form (they exceed double range well
    before n = 10^3); the plain properties exponentiate, saturating at inf.
    """

    log_upper_bound: float
    log_central_approx: float | None
    rel_error_band: float | None

    @property
    def upper_bound(self) -> float:
        return _safe_exp(self.log_upper_bound)

    @property
    def central_approx(self) -> float | None:
        if self.log_central_approx is None:
            return None
        return _safe_exp(self.log_central_approx)


def binom_bounds(n: int, k: int) -> BinomBounds:
    """Bounds on the binomial coefficient C(n, k) for 1 <= k <= n-1.

    The upper bound ``sqrt(n/(k(n-k))) exp(n H(k/n))`` always holds.  The
    central approximation ``2^n sqrt(2/(pi n)) exp(-t^2/(2n))`` with
    ``t = 2k - n`` is produced only for ``|t| <= sqrt(n) log n``, together
    with its multiplicative error band ``exp(+- n^{-1/2})``.
    """
    n = int(n)
    k = int(k)
    if n < 2 or not (1 <= k <= n - 1):
        raise DomainError(f"need 1 <= k <= n-1, got n={n}, k={k}")
    log_upper = 0.5 * math.log(n / (k * (n - k))) + n * binary_entropy(k / n)
    t = 2 * k - n
    if abs(t) <= math.sqrt(n) * math.log(n):
        log_central = (
            n * math.log(2.0) - t * t / (2.0 * n) + 0.5 * math.log(2.0 / (math.pi * n))
        )
        return BinomBounds(log_upper, log_central, math.exp(n ** -0.5))
    return BinomBounds(log_upper, None, None)


def zstar_params(beta_value: float) -> tuple[float, float]:
    """(mean, variance) of the limiting log-normal exponent Z*.

    mean = log(1 - 4 beta^2) / 4 < 0 and variance = -2 * mean > 0.
    """
    beta_value = float(beta_value)
    four_b2 = 4.0 * beta_value * beta_value
    if four_b2 >= 1.0:
        raise DomainError(f"zstar_params requires 4 beta^2 < 1, got beta={beta_value!r}")
    mean = 0.25 * math.log1p(-four_b2)
    return mean, -2.0 * mean


@dataclass(frozen=True)
class Constants:
    """Derived scalar pack for one margin value."""

    kappa: float
    p: float
    alpha_c: float
    mu2: float
    beta: float
    zstar_mean: float
    zstar_var: float

    def __post_init__(self) -> None:
        if not (0.0 < self.p <= 1.0):
            raise DomainError(f"p must lie in (0, 1], got {self.p}")
        if not (-0.5 < self.beta < 0.0):
            raise DomainError(f"beta must lie in (-1/2, 0), got {self.beta}")
        if not (self.zstar_var > 0.0 and abs(self.zstar_var + 2.0 * self.zstar_mean) < 1e-12):
            raise DomainError("zstar_var must equal -2 * zstar_mean and be positive")

    def as_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "p": self.p,
            "alpha_c": self.alpha_c,
            "mu2": self.mu2,
            "beta": self.beta,
            "zstar_mean": self.zstar_mean,
            "zstar_var": self.zstar_var,
        }


def constants(kappa: float, quad: QuadratureConfig = DEFAULT_QUADRATURE) -> Constants:
    """Evaluate the full scalar pack (p, alpha_c, mu2, beta, Z* params)."""
    kappa = _check_kappa(kappa)
    p = gaussian_mass(kappa)
    alpha = critical_alpha(kappa)
    m2 = mu2(kappa, quad)
    b = beta(kappa, quad)
    zmean, zvar = zstar_params(b)
    return Constants(kappa, p, alpha, m2, b, zmean, zvar)


def second_derivative(f, x: float, h: float = 1e-3) -> float:
    """Symmetric-difference second derivative with one Richardson step.

    Combines the central stencils at steps ``h`` and ``h/2`` to cancel the
    leading O(h^2) error term.
    """
    def central(step: float) -> float:
        return (f(x + step) - 2.0 * f(x) + f(x - step)) / (step * step)

    d_h = central(h)
    d_h2 = central(h / 2.0)
    return (4.0 * d_h2 - d_h) / 3.0
