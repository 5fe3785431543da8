"""Cycle-count statistics of the disorder matrix.

The order-k statistic sums, over distinct row indices j_1..j_k and distinct
column indices i_1..i_k, the products M[j_l, i_l] M[j_l, i_{l+1}] around the
closed alternating cycle (i_{k+1} = i_1), normalized by (mn)^{-k/2}; the
degenerate k=1 case subtracts sqrt(mn) so that it is centered.

For k <= 3 the distinct-index sums are evaluated exactly through matrix
identities (inclusion-exclusion over index coincidences), costing
O(m n min(m, n) + min(m, n)^3) instead of the O((mn)^k) naive sum.  The
naive sum is kept in the test suite as the oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ValidationError
from .rng import make_rng
from .simulator import PlantedKind, planted_matrix
from .special_fn import normal_cdf

__all__ = [
    "MAX_ORDER",
    "CycleVector",
    "McMoments",
    "CltDiagnostic",
    "cycle_count",
    "cycle_counts",
    "weighted_count",
    "weighted_tail_bound",
    "mean_shift",
    "block_means",
    "decomposed_cycle_count",
    "cycle_vector",
    "mc_cycle_moments",
    "clt_diagnostic",
    "ks_to_standard_normal",
]

MAX_ORDER = 3


def _as_matrix(mat) -> np.ndarray:
    m = np.asarray(mat, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 2:
        raise DomainError(f"disorder matrix must be (m >= 1) x (n >= 2), got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError("disorder matrix must have finite entries")
    return m


def _check_order(mat: np.ndarray, k: int) -> None:
    if not 1 <= k <= MAX_ORDER:
        raise DomainError(f"only cycle orders 1..{MAX_ORDER} have exact closed forms, got k={k}")
    m, n = mat.shape
    if m < k or n < k:
        raise DomainError(f"order k={k} needs at least k distinct rows and columns, got {mat.shape}")


def _raw_cycle_sums(mat: np.ndarray, kmax: int) -> list[float]:
    """Distinct-index cycle sums (unnormalized, unshifted) for k = 1..kmax."""
    m, n = mat.shape
    out = [float((mat * mat).sum())]
    if kmax == 1:
        return out
    gram = mat.T @ mat  # n x n; tr((MM^T)^r) = tr(gram^r)
    sq = mat * mat
    d = sq.sum(axis=1)  # diag(MM^T)
    col2 = sq.sum(axis=0)  # column sums of squares
    tr_b2 = float((gram * gram).sum())
    sum_p2 = float((col2 * col2).sum())  # sum_{a,b} (N N^T)_{ab}
    tr_p2 = float((sq * sq).sum())
    out.append((tr_b2 - float((d * d).sum())) - (sum_p2 - tr_p2))
    if kmax == 2:
        return out
    # k = 3: inclusion-exclusion over column and row coincidences.
    mga = mat @ gram  # = (M M^T) M
    tr_b3 = float(np.trace(gram @ gram @ gram))
    b2_diag = (mga * mat).sum(axis=1)  # (B^2)_{aa}
    tr_tilde = tr_b3 - 3.0 * float((b2_diag * d).sum()) + 2.0 * float((d**3).sum())
    w = (gram * gram).sum(axis=1)  # (M^T B M)_{ii}
    v_full = float((col2 * w).sum())
    v_bc = float(((sq @ col2) * d).sum())
    v_ba = float(((mat**3) * mga).sum())
    v_eq = float((d * (mat**4).sum(axis=1)).sum())
    v = v_full - v_bc - 2.0 * v_ba + 2.0 * v_eq
    s1, s2, s3 = col2, (sq**2).sum(axis=0), (sq**3).sum(axis=0)
    w3 = float((s1**3 - 3.0 * s2 * s1 + 2.0 * s3).sum())
    out.append(tr_tilde - 3.0 * v + 2.0 * w3)
    return out


def cycle_count(mat, k: int) -> float:
    """Exact normalized cycle count C_k for k in {1, 2, 3}."""
    m = _as_matrix(mat)
    _check_order(m, k)
    rows, cols = m.shape
    raw = _raw_cycle_sums(m, k)[k - 1]
    value = raw / (rows * cols) ** (k / 2.0)
    if k == 1:
        value -= math.sqrt(rows * cols)
    return value


def cycle_counts(mat, kmax: int) -> np.ndarray:
    """C_1..C_kmax sharing intermediate matrix products."""
    m = _as_matrix(mat)
    _check_order(m, kmax)
    rows, cols = m.shape
    raws = _raw_cycle_sums(m, kmax)
    out = np.array([raw / (rows * cols) ** (k / 2.0) for k, raw in enumerate(raws, start=1)])
    out[0] -= math.sqrt(rows * cols)
    return out


def weighted_count(c, beta: float, K: int) -> float:
    """Weighted aggregate sum_{k<=K} (2 (2 beta)^k C_k - (2 beta)^{2k}) / (4k)."""
    c = np.asarray(c, dtype=np.float64)
    if K > c.size:
        raise DomainError(f"K={K} exceeds the {c.size} supplied cycle counts")
    ks = np.arange(1, K + 1)
    tb = (2.0 * beta) ** ks
    return float(((2.0 * tb * c[:K] - tb * tb) / (4.0 * ks)).sum())


def weighted_tail_bound(beta: float, K: int) -> float:
    """Analytic tail sum_{k>K} (2 beta)^{2k} / (4k) dropped by truncating at K.

    Equals -log(1 - 4 beta^2)/4 minus the first K terms.
    """
    four_b2 = (2.0 * beta) ** 2
    if four_b2 >= 1.0:
        raise DomainError("tail bound requires 4 beta^2 < 1")
    ks = np.arange(1, K + 1)
    head = (four_b2**ks / (4.0 * ks)).sum()
    return float(-0.25 * math.log1p(-four_b2) - head)


def mean_shift(beta: float, K: int) -> np.ndarray:
    """Shift vector with entries (2 beta)^k / sqrt(2k), k = 1..K."""
    ks = np.arange(1, K + 1)
    return (2.0 * beta) ** ks / np.sqrt(2.0 * ks)


@dataclass(frozen=True)
class CycleVector:
    """Cycle counts C_1..C_K with the weighted aggregate and scaled components."""

    K: int
    beta: float
    c: np.ndarray
    y: float
    v: np.ndarray

    def __post_init__(self) -> None:
        recomputed = weighted_count(self.c, self.beta, self.K)
        if abs(self.y - recomputed) > 1e-12 * max(1.0, abs(self.y)):
            raise DomainError("weighted aggregate inconsistent with cycle counts")


def cycle_vector(mat, K: int, beta: float) -> CycleVector:
    """Evaluate (C_1..C_K, Y_K, V) for one disorder matrix."""
    c = cycle_counts(mat, K)
    y = weighted_count(c, beta, K)
    v = c / np.sqrt(2.0 * np.arange(1, K + 1))
    return CycleVector(K=K, beta=beta, c=c, y=y, v=v)


def block_means(mat, t: int) -> np.ndarray:
    """Per-row means over the leading (n+t)/2 and trailing (n-t)/2 columns."""
    m = _as_matrix(mat)
    n = m.shape[1]
    if abs(t) >= n or (n + t) % 2 != 0:
        raise DomainError(f"block split t={t} needs |t| < n and t = n (mod 2)")
    cut = (n + t) // 2
    if cut == 0 or cut == n:
        raise DomainError(f"block split t={t} leaves an empty block at n={n}")
    return np.column_stack([m[:, :cut].mean(axis=1), m[:, cut:].mean(axis=1)])


def decomposed_cycle_count(mat, k: int, t: int, sigma) -> float:
    """Cycle count of the recentered matrix with supplied per-row block means.

    Each entry is replaced by (entry - own block mean) + sigma[row, block];
    with sigma equal to the true block means this reproduces ``cycle_count``
    exactly.
    """
    m = _as_matrix(mat)
    if k > 2:
        raise DomainError("decomposed cycle counts are supported for k <= 2")
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.shape != (m.shape[0], 2):
        raise DomainError(f"sigma must be (m, 2) row-wise block means, got {sigma.shape}")
    own = block_means(m, t)
    cut = (m.shape[1] + t) // 2
    eff = m.copy()
    eff[:, :cut] += (sigma[:, 0] - own[:, 0])[:, None]
    eff[:, cut:] += (sigma[:, 1] - own[:, 1])[:, None]
    return cycle_count(eff, k)


@dataclass(frozen=True)
class McMoments:
    """Monte Carlo mean/variance of one cycle count with standard errors."""

    mean: float
    variance: float
    se_mean: float
    se_variance: float
    trials: int


def _cycle_trial(kind: PlantedKind, n: int, kappa: float, m: int, kmax: int, seed: int):
    mat = planted_matrix(kind, n, kappa, m, make_rng(seed))
    return cycle_counts(mat, kmax)


def mc_cycle_moments(
    kind: PlantedKind,
    n: int,
    m: int,
    k: int,
    trials: int,
    seed: int,
    kappa: float = 1.0,
    threads: int | None = None,
) -> McMoments:
    """Monte Carlo mean and variance of C_k under the requested row law."""
    from .parallel import parallel_trials

    if not 1 <= k <= MAX_ORDER:
        raise DomainError(f"k must be in 1..{MAX_ORDER}, got {k}")
    kind.validate_for(n)
    samples = np.array(
        [row[k - 1] for row in parallel_trials(_cycle_trial, trials, threads, seed, args=(kind, n, kappa, m, k))]
    )
    t = samples.size
    mean = float(samples.mean())
    var = float(samples.var(ddof=1))
    se_mean = math.sqrt(var / t)
    # SE of the sample variance under approximate normality.
    se_var = var * math.sqrt(2.0 / (t - 1))
    return McMoments(mean, var, se_mean, se_var, t)


def ks_to_standard_normal(samples: np.ndarray) -> float:
    """One-sample Kolmogorov-Smirnov distance to N(0, 1)."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    t = x.size
    if t == 0:
        raise ValidationError("KS distance needs at least one sample")
    cdf = normal_cdf(x)
    grid = np.arange(1, t + 1) / t
    return float(np.max(np.maximum(np.abs(cdf - grid), np.abs(cdf - (grid - 1.0 / t)))))


@dataclass(frozen=True)
class CltDiagnostic:
    """Per-component normality diagnostics of the scaled cycle vector."""

    ks: np.ndarray
    correlations: np.ndarray
    shift_multiplier: int
    trials: int


_SHIFT_MULTIPLIER = {"null": 0, "single": 1, "pair": 2}


def clt_diagnostic(
    kind: PlantedKind,
    n: int,
    m: int,
    K: int,
    trials: int,
    seed: int,
    kappa: float = 1.0,
    beta: float | None = None,
    threads: int | None = None,
) -> CltDiagnostic:
    """KS distances of the components of V(M) (shifted per row law) to N(0,1),
    plus the pairwise sample correlations between components.
    """
    from .parallel import parallel_trials
    from .special_fn import beta as beta_fn

    if not 1 <= K <= MAX_ORDER:
        raise DomainError(f"K must be in 1..{MAX_ORDER}, got {K}")
    kind.validate_for(n)
    if beta is None:
        beta = beta_fn(kappa)
    rows = parallel_trials(_cycle_trial, trials, threads, seed, args=(kind, n, kappa, m, K))
    c = np.vstack(rows)  # trials x K
    v = c / np.sqrt(2.0 * np.arange(1, K + 1))
    mult = _SHIFT_MULTIPLIER[kind.kind]
    centered = v - mult * mean_shift(beta, K)
    ks = np.array([ks_to_standard_normal(centered[:, j]) for j in range(K)])
    corr = np.corrcoef(centered, rowvar=False) if K > 1 else np.ones((1, 1))
    return CltDiagnostic(ks, np.atleast_2d(corr), mult, c.shape[0])
