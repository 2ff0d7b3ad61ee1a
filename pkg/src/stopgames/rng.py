"""Seeded random streams for reproducible Monte Carlo runs.

Replication r of a harness seeded with s must draw from ``substream(s, r)``.
Substreams are statistically independent and derived only from (seed, index),
so replications can run in any order, or in parallel, with identical results.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, index: int) -> np.random.Generator:
    """Independent generator for replication `index` of a run seeded `seed`."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def as_generator(seed) -> np.random.Generator:
    """Pass through Generators, otherwise seed a fresh one."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_index(rng: np.random.Generator, probs) -> int:
    """Draw an index by an inverse-CDF walk over `probs` in index order."""
    u = rng.random()
    acc = 0.0
    last = len(probs) - 1
    for j in range(last):
        acc += probs[j]
        if u < acc:
            return j
    return last
