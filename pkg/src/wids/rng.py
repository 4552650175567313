"""Deterministic RNG stream derivation.

Every stochastic step derives its own generator from (master seed, tags),
so results never depend on call order or scheduling.
"""

import hashlib

import numpy as np


def _tag_entropy(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.sha256(str(tag).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(seed: int, *tags) -> np.random.Generator:
    """Generator keyed by seed plus an arbitrary tag path.

    The same (seed, tags) always yields the same stream, on any platform.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_tag_entropy(t) for t in tags]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def derive_seed(seed: int, *tags) -> int:
    """Stable 63-bit child seed for nested components."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_tag_entropy(t) for t in tags]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0] >> 1)
