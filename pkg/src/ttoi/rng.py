"""Seeded, addressable random streams.

Every stream is a Philox counter-based generator keyed by a seed plus an
optional tuple of integers (replication index, grid cell, ...), so any
replication can be regenerated on its own. Normal deviates come from
numpy's ziggurat sampler, uniform ones from the 53-bit double conversion.
"""

from __future__ import annotations

import numpy as np


def generator(seed, *keys: int) -> np.random.Generator:
    """A generator for ``(seed, *keys)``; an existing generator passes through."""
    if isinstance(seed, np.random.Generator):
        if keys:
            raise ValueError("keys cannot be applied to an existing generator")
        return seed
    if seed is None:
        raise ValueError("an explicit seed is required")
    entropy = [int(seed), *(int(k) for k in keys)]
    if any(e < 0 for e in entropy):
        raise ValueError(f"seed and keys must be non-negative, got {entropy}")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
