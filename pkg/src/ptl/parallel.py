"""Deterministic parallel execution of independent trials.

A job is a pure function ``job(*args, seed)``; trial ``i`` always receives
``derive_seed(master_seed, i)``, and results are returned in trial order,
so the output is independent of thread count and scheduling.  BLAS pools
are pinned to one thread inside every trial (including the inline path) so
that floating-point results are bit-identical however the work is split.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor

from threadpoolctl import threadpool_limits

__all__ = ["default_threads", "parallel_trials"]

from .errors import ValidationError
from .rng import derive_seed


def default_threads() -> int:
    """Thread default: PTL_THREADS if set, else the CPU count."""
    env = os.environ.get("PTL_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError as exc:
            raise ValidationError(f"PTL_THREADS must be an integer, got {env!r}") from exc
        if value < 1:
            raise ValidationError(f"PTL_THREADS must be >= 1, got {value}")
        return value
    return os.cpu_count() or 1


def _run_chunk(job, args, master_seed, lo, hi):
    with threadpool_limits(limits=1):
        return [job(*args, derive_seed(master_seed, i)) for i in range(lo, hi)]


def parallel_trials(job, trials: int, threads: int | None, master_seed: int, args=()) -> list:
    """Run ``trials`` independent jobs and return their results in trial order.

    ``job`` must be picklable (module level) and pure in its arguments; any
    worker failure aborts the whole run with the original exception, and no
    partial results are returned.
    """
    trials = int(trials)
    if trials < 1:
        raise ValidationError(f"trials must be >= 1, got {trials}")
    if threads is None:
        threads = default_threads()
    threads = int(threads)
    if threads < 1:
        raise ValidationError(f"threads must be >= 1, got {threads}")

    if threads == 1 or trials == 1:
        return _run_chunk(job, args, master_seed, 0, trials)

    chunk = max(1, math.ceil(trials / (threads * 4)))
    spans = [(lo, min(lo + chunk, trials)) for lo in range(0, trials, chunk)]
    results: list = []
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_run_chunk, job, args, master_seed, lo, hi) for lo, hi in spans]
        for fut in futures:  # submission order == trial order
            results.extend(fut.result())
    return results
