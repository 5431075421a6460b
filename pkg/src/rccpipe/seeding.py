"""Deterministic seed derivation for nested randomized stages.

Every randomized routine takes an explicit integer seed; nested work (restart
r of a k-means call, cell (i, j) of a grid) derives sub-seeds from the parent
seed plus its coordinates. Two derivations with different paths are
statistically independent, and the whole tree is reproducible from the master
seed alone, regardless of execution order or parallelism.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _component(value) -> int:
    """Map a path coordinate to a stable integer (strings via blake2b)."""
    if isinstance(value, str):
        digest = hashlib.blake2b(value.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big")
    return int(value)


def derive_seed(master: int, *path) -> int:
    """A stable 64-bit sub-seed for the given coordinates under `master`."""
    ss = np.random.SeedSequence([int(master), *[_component(p) for p in path]])
    return int(ss.generate_state(1, np.uint64)[0])


def rng_for(master: int, *path) -> np.random.Generator:
    """A fresh PCG64 generator seeded at the given coordinates."""
    return np.random.default_rng(
        np.random.SeedSequence([int(master), *[_component(p) for p in path]])
    )
