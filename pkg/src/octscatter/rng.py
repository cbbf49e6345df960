"""Seed derivation and keyed generators.

Every random draw in the package is a pure function of a derived seed and
a position, so results never depend on thread scheduling.
"""
import hashlib

import numpy as np


def derive_seed(seed: int, *names) -> int:
    """Stable 64-bit sub-seed for a named subsystem."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed)).encode())
    for name in names:
        h.update(b"/")
        h.update(str(name).encode())
    return int.from_bytes(h.digest(), "little")


def generator(seed: int, *names) -> np.random.Generator:
    """Philox-backed generator keyed on a derived seed."""
    return np.random.Generator(np.random.Philox(key=derive_seed(seed, *names)))
