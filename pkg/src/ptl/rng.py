"""Counter-based splittable random streams.

Every trial gets its own Philox generator keyed by a 64-bit seed derived
from (master_seed, trial_index), so results never depend on scheduling or
on how many workers execute the trial range.
"""

from __future__ import annotations

import numpy as np

__all__ = ["derive_seed", "make_rng"]


def derive_seed(master_seed: int, index: int) -> int:
    """Stable 64-bit trial seed derived from a master seed and trial index."""
    ss = np.random.SeedSequence((int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(index)))
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    """Philox generator for one 64-bit seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)))
