"""Deterministic RNG sub-streams.

Every random decision in a run draws from its own generator, keyed by
(master seed, purpose tag, and usually user id and round index) through
numpy's SeedSequence spawn keys. Results therefore never depend on the
order in which users or rounds happen to be processed.
"""

from __future__ import annotations

import numpy as np

TAG_PLACEMENT = 1
TAG_PARTITION = 2
TAG_INIT = 3
TAG_TRAIN = 4
TAG_CHANNEL = 5
TAG_CPU = 6


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Generator for one purpose; key ints must be non-negative."""
    return np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=key))


def derive_seed(master_seed: int, *key: int) -> int:
    """Stable integer seed for components that take a seed, not a stream."""
    return int(
        np.random.SeedSequence(entropy=master_seed, spawn_key=key).generate_state(1, np.uint64)[0]
    )
