"""Keyed random streams.

Streams are derived from a base seed plus any mix of string and integer keys,
so a sample's draws depend only on its own id and never on batch order.
"""

import hashlib

import numpy as np


def _key_int(key) -> int:
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("stream keys must be non-negative")
        return int(key)
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream(seed: int, *keys) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([_key_int(seed), *map(_key_int, keys)]))
