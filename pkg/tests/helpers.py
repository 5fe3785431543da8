"""Independent oracles shared across test modules.

Everything here is deliberately naive: direct enumeration, series
expansions, and brute-force sums that the fast implementations are
checked against.  Keep these free of package internals beyond the public
data types.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def erf_series(x: float, terms: int = 40) -> float:
    """Maclaurin series for erf, independent of math.erf."""
    total = 0.0
    term = x
    for n in range(terms):
        total += term / (2 * n + 1)
        term *= -x * x / (n + 1)
    return 2.0 / math.sqrt(math.pi) * total


def naive_survivors(n: int, rows: np.ndarray, kappa: float) -> set[tuple[int, ...]]:
    """All sign vectors surviving every row, by direct enumeration."""
    thresh = kappa * math.sqrt(n)
    out = set()
    for signs in itertools.product((1, -1), repeat=n):
        x = np.array(signs, dtype=np.float64)
        if all(abs(float(x @ g)) <= thresh for g in rows):
            out.add(signs)
    return out


def brute_cycle_count(mat: np.ndarray, k: int) -> float:
    """Distinct-tuple cycle sum, O((mn)^k)."""
    m, n = mat.shape
    total = 0.0
    for js in itertools.permutations(range(m), k):
        for cols in itertools.permutations(range(n), k):
            prod = 1.0
            for ell in range(k):
                prod *= mat[js[ell], cols[ell]] * mat[js[ell], cols[(ell + 1) % k]]
            total += prod
    total /= (m * n) ** (k / 2.0)
    if k == 1:
        total -= math.sqrt(m * n)
    return total


def markov_mean_threshold_n2(p: float) -> float:
    """Exact E[tau] at n=2.

    The two representatives are orthogonal, so each survives a row
    independently with probability p; absorbing-chain algebra gives
    E[tau] = (1 + 2p) / (1 - p^2).
    """
    return (1.0 + 2.0 * p) / (1.0 - p * p)


def random_spd(rng: np.random.Generator, d: int) -> np.ndarray:
    a = rng.normal(size=(d, d))
    return a @ a.T + 0.1 * np.eye(d)
