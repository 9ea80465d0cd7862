"""Seeded generator helpers.

Everything stochastic in the package takes either an integer seed or a
``numpy.random.Generator``. Child streams are derived with
``SeedSequence`` so that (seed, key) pairs map to independent,
reproducible generators.
"""
from __future__ import annotations

from typing import Union

import numpy as np

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence, None]


def as_generator(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ValueError("an explicit seed is required")
    return np.random.default_rng(seed)


def child_seed(master_seed: int, *key: int) -> int:
    """Deterministic 63-bit integer seed for ``(master_seed, *key)``."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def spawn(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(int(seed)).spawn(n)]
