"""Exact solution-set simulation for the symmetric binary perceptron.

A sign vector ``x`` in {-1,+1}^n survives a Gaussian row ``g`` when
``|<x, g>| <= kappa sqrt(n)``.  Because ``x`` and ``-x`` always survive
together, only the 2^{n-1} representatives with first coordinate +1 are
stored; all reported counts are full counts (twice the representative
count).

Representative indexing: for index ``b`` in [0, 2^{n-1}), coordinate 1 is
+1 and coordinate ``j + 2`` is -1 exactly when bit ``j`` of ``b`` is set.

The survivor set is held as a little-endian packed bitset while it is
large (dot products for the whole half-cube are produced by a coordinate
doubling pass, O(1) amortized work per vector) and as an explicit index
array once it is small (subsequent rows then only touch surviving
indices).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BudgetError,
    CapacityError,
    DomainError,
    RunawayError,
    SampleSizeError,
    SamplingError,
    ValidationError,
)
from .rng import make_rng
from .special_fn import critical_alpha, gaussian_kl

__all__ = [
    "MAX_N",
    "ModelParams",
    "PlantedKind",
    "NULL",
    "SINGLE",
    "SolutionSet",
    "ThresholdRecord",
    "OverlapHistogram",
    "EmptyingCurve",
    "full_cube",
    "apply_constraint",
    "sample_threshold",
    "sample_thresholds",
    "survivor_count_at",
    "solution_set_at",
    "survivor_count",
    "sample_planted_row",
    "planted_matrix",
    "planted_vector",
    "overlap_histogram",
    "gram_deviation",
    "conditional_emptying_curve",
]

MAX_N = 30  # 2^29 representative bits = 64 MiB
_CHUNK_BITS = 22
_INDEX_CUTOFF = 1 << 15  # switch to index mode below this representative count
_POPCNT = np.array([bin(v).count("1") for v in range(256)], dtype=np.uint8)


@dataclass(frozen=True)
class ModelParams:
    """Margin and dimension of one perceptron instance family."""

    kappa: float
    n: int

    def __post_init__(self) -> None:
        if not (isinstance(self.n, (int, np.integer)) and 2 <= self.n <= MAX_N):
            raise CapacityError(
                f"n must be an integer in [2, {MAX_N}] (2^(n-1) representative bits "
                f"must fit the enumeration budget), got {self.n!r}"
            )
        if not (math.isfinite(self.kappa) and self.kappa > 0):
            raise DomainError(f"kappa must be a positive finite real, got {self.kappa!r}")

    @property
    def n_reps(self) -> int:
        return 1 << (self.n - 1)

    @property
    def threshold(self) -> float:
        """Constraint level kappa * sqrt(n)."""
        return self.kappa * math.sqrt(self.n)


@dataclass(frozen=True)
class PlantedKind:
    """Row law: unconditioned, or conditioned on one or two surviving vectors."""

    kind: str
    t: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("null", "single", "pair"):
            raise DomainError(f"unknown planted kind {self.kind!r}")
        if self.kind == "pair":
            if not isinstance(self.t, (int, np.integer)):
                raise DomainError("pair kind requires an integer overlap t")
        elif self.t is not None:
            raise DomainError(f"{self.kind} kind takes no overlap parameter")

    @classmethod
    def pair(cls, t: int) -> "PlantedKind":
        return cls("pair", int(t))

    def validate_for(self, n: int) -> None:
        if self.kind == "pair":
            if abs(self.t) > n or (n + self.t) % 2 != 0:
                raise DomainError(
                    f"pair overlap t={self.t} needs |t| <= n and t = n (mod 2) at n={n}"
                )


NULL = PlantedKind("null")
SINGLE = PlantedKind("single")


def _validate_row(g, n: int) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (n,):
        raise DomainError(f"constraint row must have shape ({n},), got {g.shape}")
    if not np.all(np.isfinite(g)):
        raise DomainError("constraint row must have finite entries")
    return g


def _fold_low(g: np.ndarray, lb: int) -> np.ndarray:
    """Dot-product contributions of coordinates 1..lb+1 over all low bit patterns."""
    out = np.empty(1 << lb, dtype=np.float64)
    out[0] = g[0]
    size = 1
    for i in range(1, lb + 1):
        out[size : 2 * size] = out[:size] - g[i]
        out[:size] += g[i]
        size *= 2
    return out


def _fold_high(g: np.ndarray, lb: int, nb: int) -> np.ndarray:
    out = np.zeros(1 << (nb - lb), dtype=np.float64)
    size = 1
    for i in range(lb + 1, nb + 1):
        out[size : 2 * size] = out[:size] - g[i]
        out[:size] += g[i]
        size *= 2
    return out


def _apply_packed(packed: np.ndarray, nb: int, g: np.ndarray, thresh: float) -> int:
    """Filter the packed half-cube bitset in place; returns the new popcount."""
    lb = min(nb, _CHUNK_BITS)
    low = _fold_low(g, lb)
    high = _fold_high(g, lb, nb) if nb > lb else None
    chunk_reps = 1 << lb
    chunk_bytes = max(1, chunk_reps >> 3)
    count = 0
    for c in range(1 << (nb - lb)):
        seg = packed[c * chunk_bytes : (c + 1) * chunk_bytes]
        if not seg.any():
            continue
        dots = low if high is None else low + high[c]
        keep = np.abs(dots) <= thresh
        np.bitwise_and(seg, np.packbits(keep, bitorder="little")[: seg.size], out=seg)
        count += int(_POPCNT[seg].sum(dtype=np.int64))
    return count


_INDEX_CHUNK = 1 << 17


def _index_dots(idx: np.ndarray, g: np.ndarray) -> np.ndarray:
    nb = g.size - 1
    shifts = np.arange(nb, dtype=np.uint32)
    base = g[0] + g[1:].sum()
    out = np.empty(idx.size)
    for lo in range(0, idx.size, _INDEX_CHUNK):
        part = idx[lo : lo + _INDEX_CHUNK]
        bits = ((part[:, None] >> shifts) & np.uint32(1)).astype(np.float64)
        out[lo : lo + part.size] = base - 2.0 * (bits @ g[1:])
    return out


def _unpack_indices(packed: np.ndarray, n_reps: int) -> np.ndarray:
    mask = np.unpackbits(packed, bitorder="little", count=n_reps)
    return np.flatnonzero(mask).astype(np.uint32)


def _full_packed(n_reps: int) -> np.ndarray:
    nbytes = (n_reps + 7) >> 3
    packed = np.full(nbytes, 0xFF, dtype=np.uint8)
    if n_reps & 7:
        packed[-1] = (1 << (n_reps & 7)) - 1
    return packed


def _signs_from_indices(idx: np.ndarray, n: int) -> np.ndarray:
    """Full +-1 representative vectors (rows) for the given indices."""
    out = np.empty((idx.size, n), dtype=np.int8)
    out[:, 0] = 1
    shifts = np.arange(n - 1, dtype=np.uint32)
    bits = (np.asarray(idx, dtype=np.uint32)[:, None] >> shifts) & np.uint32(1)
    out[:, 1:] = 1 - 2 * bits.astype(np.int8)
    return out


class SolutionSet:
    """Survivors of the constraint intersection, one bit per representative."""

    __slots__ = ("n", "_packed", "_count")

    def __init__(self, n: int, packed: np.ndarray, count: int | None = None):
        self.n = int(n)
        self._packed = packed
        self._count = count

    @property
    def n_reps(self) -> int:
        return 1 << (self.n - 1)

    def popcount(self) -> int:
        if self._count is None:
            self._count = int(_POPCNT[self._packed].sum(dtype=np.int64))
        return self._count

    def full_count(self) -> int:
        """Survivor count over all of {-1,+1}^n (twice the representatives)."""
        return 2 * self.popcount()

    def indices(self) -> np.ndarray:
        return _unpack_indices(self._packed, self.n_reps)

    def vectors(self) -> np.ndarray:
        """Surviving representatives as +-1 rows, in index order."""
        return _signs_from_indices(self.indices(), self.n)

    def copy(self) -> "SolutionSet":
        return SolutionSet(self.n, self._packed.copy(), self._count)


def full_cube(params: ModelParams) -> SolutionSet:
    """The unconstrained set: every representative bit set."""
    return SolutionSet(params.n, _full_packed(params.n_reps), params.n_reps)


def apply_constraint(s: SolutionSet, g, kappa: float) -> SolutionSet:
    """Survivors of ``s`` under one row: keeps x with |<x, g>| <= kappa sqrt(n)."""
    g = _validate_row(g, s.n)
    if not (math.isfinite(kappa) and kappa > 0):
        raise DomainError(f"kappa must be a positive finite real, got {kappa!r}")
    packed = s._packed.copy()
    count = _apply_packed(packed, s.n - 1, g, kappa * math.sqrt(s.n))
    return SolutionSet(s.n, packed, count)


class _Cursor:
    """Single-owner survivor state advanced one disorder row at a time."""

    def __init__(self, params: ModelParams):
        self.params = params
        self._nb = params.n - 1
        self._thresh = params.threshold
        if params.n_reps <= _INDEX_CUTOFF:
            self._packed = None
            self._idx = np.arange(params.n_reps, dtype=np.uint32)
        else:
            self._packed = _full_packed(params.n_reps)
            self._idx = None
        self._reps = params.n_reps

    @property
    def full_count(self) -> int:
        return 2 * self._reps

    def apply_row(self, g: np.ndarray) -> int:
        if self._idx is not None:
            if self._idx.size:
                dots = _index_dots(self._idx, g)
                self._idx = self._idx[np.abs(dots) <= self._thresh]
            self._reps = self._idx.size
        else:
            self._reps = _apply_packed(self._packed, self._nb, g, self._thresh)
            # Index mode wins once the survivor fraction is small.
            if self._reps <= max(_INDEX_CUTOFF, self.params.n_reps >> 4):
                self._idx = _unpack_indices(self._packed, self.params.n_reps)
                self._packed = None
        return 2 * self._reps

    def indices(self) -> np.ndarray:
        if self._idx is not None:
            return self._idx
        return _unpack_indices(self._packed, self.params.n_reps)

    def to_solution_set(self) -> SolutionSet:
        if self._packed is not None:
            return SolutionSet(self.params.n, self._packed.copy(), self._reps)
        packed = np.zeros((self.params.n_reps + 7) >> 3, dtype=np.uint8)
        if self._idx.size:
            mask = np.zeros(self.params.n_reps, dtype=np.uint8)
            mask[self._idx] = 1
            packed = np.packbits(mask, bitorder="little")
        return SolutionSet(self.params.n, packed, self._reps)


@dataclass(frozen=True)
class ThresholdRecord:
    """One trial: the threshold, the survivor trace, and the seed that made it."""

    tau: int
    survivor_trace: tuple[tuple[int, int], ...]
    seed: int

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "tau": self.tau,
            "trace": [[j, c] for j, c in self.survivor_trace],
        }


def _default_max_rows(params: ModelParams) -> int:
    alpha = critical_alpha(params.kappa)
    if not math.isfinite(alpha):
        raise ValidationError(
            "kappa is so large that the critical density overflows; "
            "pass an explicit max_rows"
        )
    return int(math.ceil(10.0 * alpha * params.n))


def sample_threshold(
    params: ModelParams,
    seed: int,
    max_rows: int | None = None,
    record_trace: bool = True,
) -> ThresholdRecord:
    """Draw fresh Gaussian rows until the solution set first empties.

    Deterministic given (params, seed).  Raises :class:`RunawayError` if the
    set has not emptied after ``max_rows`` rows (default ``10 alpha_c n``,
    which a healthy run exceeds with astronomically small probability).
    """
    if max_rows is None:
        max_rows = _default_max_rows(params)
    rng = make_rng(seed)
    cursor = _Cursor(params)
    trace = [(0, cursor.full_count)] if record_trace else None
    for j in range(1, max_rows + 1):
        count = cursor.apply_row(rng.standard_normal(params.n))
        if record_trace:
            trace.append((j, count))
        if count == 0:
            if not record_trace:
                trace = [(j, 0)]
            return ThresholdRecord(j, tuple(trace), int(seed))
    raise RunawayError(
        f"solution set still nonempty after {max_rows} rows "
        f"(n={params.n}, kappa={params.kappa}, seed={seed})"
    )


def _threshold_trial(params: ModelParams, max_rows, record_trace: bool, seed: int) -> ThresholdRecord:
    return sample_threshold(params, seed, max_rows, record_trace)


def sample_thresholds(
    params: ModelParams,
    trials: int,
    master_seed: int,
    max_rows: int | None = None,
    record_trace: bool = True,
    threads: int | None = None,
) -> list[ThresholdRecord]:
    """Independent threshold trials; trial i is seeded from (master_seed, i)."""
    from .parallel import parallel_trials

    return parallel_trials(
        _threshold_trial, trials, threads, master_seed, args=(params, max_rows, record_trace)
    )


def survivor_count_at(params: ModelParams, m: int, seed: int) -> int:
    """Full survivor count |S^m| after m fresh rows, deterministic per seed."""
    m = int(m)
    if m < 0:
        raise DomainError(f"m must be nonnegative, got {m}")
    rng = make_rng(seed)
    cursor = _Cursor(params)
    count = cursor.full_count
    for _ in range(m):
        count = cursor.apply_row(rng.standard_normal(params.n))
    return count


def solution_set_at(params: ModelParams, m: int, seed: int) -> SolutionSet:
    """The solution set itself after m fresh rows, deterministic per seed."""
    m = int(m)
    if m < 0:
        raise DomainError(f"m must be nonnegative, got {m}")
    rng = make_rng(seed)
    cursor = _Cursor(params)
    for _ in range(m):
        cursor.apply_row(rng.standard_normal(params.n))
    return cursor.to_solution_set()


def survivor_count(params: ModelParams, rows) -> int:
    """Full survivor count after applying the given rows in order."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != params.n:
        raise DomainError(f"rows must have shape (m, {params.n}), got {rows.shape}")
    cursor = _Cursor(params)
    count = cursor.full_count
    for g in rows:
        count = cursor.apply_row(g)
        if count == 0:
            break
    return count


def planted_vector(n: int, t: int) -> np.ndarray:
    """The +-1 vector with (n+t)/2 leading ones, used to define planted laws."""
    if abs(t) > n or (n + t) % 2 != 0:
        raise DomainError(f"overlap t={t} needs |t| <= n and t = n (mod 2)")
    v = np.full(n, -1.0)
    v[: (n + t) // 2] = 1.0
    return v


_REJECTION_BUDGET = 10**6


def planted_matrix(
    kind: PlantedKind,
    n: int,
    kappa: float,
    m: int,
    rng: np.random.Generator,
    budget: int = _REJECTION_BUDGET,
) -> np.ndarray:
    """m independent rows from the requested law, by vectorized rejection.

    Row sampling has no enumeration component, so n is unrestricted here.
    Acceptance probability is at least p^2 for every kind, so exhausting
    the attempt budget signals a bug rather than bad luck.
    """
    n = int(n)
    if n < 2:
        raise DomainError(f"n must be >= 2, got {n}")
    if not (math.isfinite(kappa) and kappa > 0):
        raise DomainError(f"kappa must be a positive finite real, got {kappa!r}")
    kind.validate_for(n)
    thresh = kappa * math.sqrt(n)
    if kind.kind == "null":
        return rng.standard_normal((m, n))
    v_pair = planted_vector(n, kind.t) if kind.kind == "pair" else None
    out = np.empty((m, n))
    filled = 0
    attempts = 0
    while filled < m:
        want = m - filled
        batch = rng.standard_normal((want, n))
        attempts += want
        ok = np.abs(batch.sum(axis=1)) <= thresh
        if v_pair is not None:
            ok &= np.abs(batch @ v_pair) <= thresh
        accepted = batch[ok]
        out[filled : filled + accepted.shape[0]] = accepted
        filled += accepted.shape[0]
        if attempts > budget + m:
            raise SamplingError(
                f"rejection budget exceeded after {attempts} attempts for {kind}"
            )
    return out


def sample_planted_row(kind: PlantedKind, params: ModelParams, seed: int) -> np.ndarray:
    """One disorder row from the requested planted law, deterministic per seed."""
    return planted_matrix(kind, params.n, params.kappa, 1, make_rng(seed))[0]


@dataclass(frozen=True)
class OverlapHistogram:
    """Absolute overlaps over unordered representative pairs."""

    counts: dict
    band_lo: int
    forbidden_max: int | None
    forbidden_pairs: int

    def to_csv(self) -> str:
        lines = ["overlap,count"]
        lines += [f"{t},{c}" for t, c in sorted(self.counts.items())]
        return "\n".join(lines) + "\n"


_PAIR_BUDGET = 10**4


def overlap_histogram(s: SolutionSet) -> OverlapHistogram:
    """Histogram of |<x1, x2>| over unordered representative pairs.

    Also reports the largest overlap (and pair count) inside the forbidden
    band [ceil(sqrt(n) log n), n-1].  Raises :class:`BudgetError` beyond
    10^4 survivors; apply more constraints first.
    """
    n = s.n
    reps = s.popcount()
    if reps > _PAIR_BUDGET:
        raise BudgetError(f"{reps} survivors exceed the {_PAIR_BUDGET} pair-scan budget")
    band_lo = int(math.ceil(math.sqrt(n) * math.log(n)))
    if reps < 2:
        return OverlapHistogram({}, band_lo, None, 0)
    v = s.vectors().astype(np.float32)
    counts = np.zeros(n + 1, dtype=np.int64)
    chunk = max(1, (1 << 22) // max(reps, 1))
    for lo in range(0, reps, chunk):
        hi = min(lo + chunk, reps)
        overlaps = v[lo:hi] @ v.T  # exact: integer-valued, |.| <= 30
        for r in range(lo, hi):
            row = np.abs(overlaps[r - lo, r + 1 :]).astype(np.int64)
            counts += np.bincount(row, minlength=n + 1)
    hist = {int(t): int(c) for t, c in enumerate(counts) if c}
    in_band = [t for t in hist if band_lo <= t <= n - 1]
    forbidden_max = max(in_band) if in_band else None
    forbidden_pairs = sum(hist[t] for t in in_band)
    return OverlapHistogram(hist, band_lo, forbidden_max, forbidden_pairs)


_GRAM_BUDGET = 10**3


def gram_deviation(s: SolutionSet) -> tuple[float, float]:
    """(||MM^T/n - I||_HS, KL(N(0, MM^T/n) || N(0, I))) over survivor rows.

    Quantifies how far the joint constraint values on the survivors are
    from independent standard Gaussians.
    """
    reps = s.popcount()
    if reps == 0:
        raise DomainError("gram_deviation needs at least one survivor")
    if reps > _GRAM_BUDGET:
        raise BudgetError(f"{reps} survivors exceed the {_GRAM_BUDGET} gram budget")
    mat = s.vectors().astype(np.float64)
    gram = (mat @ mat.T) / s.n
    dev = gram - np.eye(reps)
    frob = float(np.sqrt((dev * dev).sum()))
    return frob, gaussian_kl(gram, np.eye(reps))


@dataclass(frozen=True)
class EmptyingCurve:
    """Empirical vs predicted conditional emptying probabilities."""

    dt: np.ndarray
    empirical: np.ndarray
    predicted: np.ndarray
    ci99: np.ndarray
    trials_included: int
    trials_excluded: int
    survivor_counts: np.ndarray = field(repr=False, default=None)


def _emptying_trial(params: ModelParams, tau_pre: int, horizon: int, seed: int):
    rng = make_rng(seed)
    cursor = _Cursor(params)
    for _ in range(tau_pre):
        cursor.apply_row(rng.standard_normal(params.n))
    x = cursor.full_count
    if x == 0:
        return 0, -1
    first_empty = horizon + 1
    for dt in range(1, horizon + 1):
        if cursor.apply_row(rng.standard_normal(params.n)) == 0:
            first_empty = dt
            break
    return x, first_empty


def conditional_emptying_curve(
    params: ModelParams,
    tau_pre: int,
    horizon: int,
    trials: int,
    seed: int,
    threads: int | None = None,
) -> EmptyingCurve:
    """Compare P[S_{tau_pre+dt} empty] against the per-trial heuristic
    (1 - p^dt)^{X/2}, where X is the survivor count revealed at tau_pre.

    Trials already empty at tau_pre are excluded (and counted).  The 99%
    column is a normal-approximation binomial halfwidth around the
    prediction.
    """
    from .parallel import parallel_trials

    if tau_pre < 1 or horizon < 0 or trials < 1:
        raise ValidationError("tau_pre >= 1, horizon >= 0, trials >= 1 required")
    p = math.erf(params.kappa / math.sqrt(2.0))
    max_horizon = 4.0 * math.log(params.n) / abs(math.log(p))
    if horizon > max_horizon:
        raise ValidationError(
            f"horizon {horizon} exceeds the 4 log n / |log p| cap ({max_horizon:.1f})"
        )
    results = parallel_trials(
        _emptying_trial, trials, threads, seed, args=(params, tau_pre, horizon)
    )
    xs = np.array([x for x, _ in results], dtype=np.int64)
    firsts = np.array([f for _, f in results], dtype=np.int64)
    included = xs > 0
    n_inc = int(included.sum())
    if n_inc == 0:
        raise SampleSizeError("every trial was already empty at tau_pre")
    x_inc = xs[included]
    f_inc = firsts[included]
    dts = np.arange(horizon + 1)
    empirical = np.array([(f_inc <= dt).mean() for dt in dts])
    predicted = np.array(
        [np.mean((1.0 - p**dt) ** (x_inc / 2.0)) for dt in dts]
    )
    ci99 = 2.576 * np.sqrt(np.clip(predicted * (1.0 - predicted), 0.0, None) / n_inc)
    return EmptyingCurve(dts, empirical, predicted, ci99, n_inc, int(trials - n_inc), x_inc)
