"""Deterministic RNG substreams derived from (seed, path) tuples."""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def spawn(seed: int, *path: int) -> np.random.Generator:
    """Independent generator for a given seed and integer derivation path."""
    entropy = [int(seed) & _MASK64] + [int(p) & _MASK64 for p in path]
    return np.random.default_rng(np.random.SeedSequence(entropy))
