"""Determinism tests for the parallel trial driver."""

import pytest

from ptl.errors import ValidationError
from ptl.parallel import default_threads, parallel_trials
from ptl.rng import derive_seed, make_rng


def _weighted_draw(scale: float, seed: int) -> float:
    return scale * float(make_rng(seed).standard_normal())


def _seed_echo(seed: int) -> int:
    return seed


class TestDeriveSeed:
    def test_frozen_values(self):
        # Pinned so that recorded trial seeds stay replayable forever.
        assert derive_seed(0, 0) == 15793235383387715774
        assert derive_seed(0, 1) == 5836529245451711556
        assert derive_seed(12345, 7) == 13015481096164472892

    def test_distinct_across_indices(self):
        seeds = {derive_seed(42, i) for i in range(1000)}
        assert len(seeds) == 1000


class TestParallelTrials:
    def test_thread_count_invariance(self):
        results = [
            parallel_trials(_weighted_draw, 40, threads, 99, args=(2.5,))
            for threads in (1, 2, 3)
        ]
        assert results[0] == results[1] == results[2]

    def test_trial_indexing(self):
        echoed = parallel_trials(_seed_echo, 5, 2, 7)
        assert echoed == [derive_seed(7, i) for i in range(5)]

    def test_single_trial_identity(self):
        assert parallel_trials(_seed_echo, 1, 4, 3) == [derive_seed(3, 0)]

    def test_validation(self):
        with pytest.raises(ValidationError):
            parallel_trials(_seed_echo, 0, 1, 0)
        with pytest.raises(ValidationError):
            parallel_trials(_seed_echo, 5, 0, 0)

    def test_worker_exception_propagates(self):
        def boom(seed):
            raise RuntimeError("worker failure")

        # Inline path (threads=1) re-raises directly.
        with pytest.raises(RuntimeError):
            parallel_trials(boom, 3, 1, 0)


class TestDefaultThreads:
    def test_env_override(self, monkeypatch):
        monkeypatch.setenv("PTL_THREADS", "3")
        assert default_threads() == 3

    def test_env_validation(self, monkeypatch):
        monkeypatch.setenv("PTL_THREADS", "zero")
        with pytest.raises(ValidationError):
            default_threads()
        monkeypatch.setenv("PTL_THREADS", "0")
        with pytest.raises(ValidationError):
            default_threads()

    def test_fallback_positive(self, monkeypatch):
        monkeypatch.delenv("PTL_THREADS", raising=False)
        assert default_threads() >= 1
