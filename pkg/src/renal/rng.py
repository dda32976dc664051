"""Seeding helpers.

Every random stream is a Philox generator keyed by a tuple of integers, so
independent trials and roles get independent streams regardless of the order
in which they are created.
"""

import numpy as np

ROLE_CODES = {"null": 0, "alt": 1, "train": 2, "null_test": 3, "window": 4, "method": 5}


def make_rng(*key) -> np.random.Generator:
    entropy = [int(k) & 0xFFFFFFFFFFFFFFFF for k in _flatten(key)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def derive_seed(*key) -> int:
    """A 63-bit integer seed determined by ``key``."""
    entropy = [int(k) & 0xFFFFFFFFFFFFFFFF for k in _flatten(key)]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def trial_seed(seed: int, trial: int, role: str) -> int:
    return derive_seed(seed, trial, ROLE_CODES[role])


def _flatten(key):
    for k in key:
        if isinstance(k, (tuple, list)):
            yield from _flatten(k)
        else:
            yield k
