"""Counter-based random streams.

Every random quantity in the package is drawn from a Philox stream whose
key is a hash of ``(master_seed, purpose, index...)``.  Nothing depends on
global RNG state or on how trials are split between workers.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

# stream purposes
FIELD = 1
TRIAL_BLOCK = 2
SPECTRUM = 3
BOOTSTRAP = 4
PILOT = 5


def check_seed(seed) -> int:
    if seed is None:
        raise ValueError("a seed is required (no random default)")
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    return int(seed) & MASK64


def derive_key(seed: int, *path: int) -> np.ndarray:
    """128-bit Philox key for ``seed`` and a stream path (hashed by SeedSequence)."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(p) for p in path))
    return ss.generate_state(2, dtype=np.uint64)


def philox(seed: int, *path: int, counter_word: int = 0) -> np.random.Generator:
    """Generator over the stream keyed by ``(seed, *path)``.

    ``counter_word`` sets the second 64-bit word of the Philox counter so
    that independent sub-streams (e.g. one per field row) can be addressed
    directly without generating the preceding draws.
    """
    counter = np.array([0, counter_word, 0, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=derive_key(seed, *path), counter=counter))


def exp_from_uniform(u: np.ndarray) -> np.ndarray:
    """Exp(1) by inverse CDF, ``-log(U)`` with ``U = 1 - u`` in (0, 1]."""
    return -np.log1p(-u)
