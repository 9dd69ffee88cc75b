"""Seedable randomness for the whole laboratory.

All stochastic operations draw from PCG64 generators constructed from
explicit seeds, so any run can be replayed bit-for-bit. Child seeds for
sub-tasks (one per instance, per epoch, per session) are derived through
``numpy.random.SeedSequence`` spawn keys, which keeps independent streams
independent without global state.
"""

from __future__ import annotations

import numpy as np

__all__ = ["make_rng", "derive_seed"]


def make_rng(seed: int) -> np.random.Generator:
    """Return a fresh PCG64 generator for ``seed``."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def derive_seed(seed: int, *path: int) -> int:
    """Deterministically derive a child seed for a sub-task.

    ``path`` components index the sub-task (e.g. epoch number, instance
    number). Different paths give statistically independent streams.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
