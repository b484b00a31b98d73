"""Deterministic random streams.

Every stochastic routine in this package draws from a stream derived from a
root seed and a path of stream indices. Derivation goes through SHA-256, so
identical (seed, path) pairs produce identical draws on every platform and
the assignment of streams to work items is independent of scheduling.
"""

from __future__ import annotations

import hashlib
import random

_DOMAIN = b"intsmooth.rng.v1"


def derive_seed(root_seed: int, *path: int) -> int:
    """Derive a child seed from a root seed and a stream path."""
    if root_seed < 0:
        raise ValueError("root_seed must be non-negative")
    h = hashlib.sha256(_DOMAIN)
    h.update(root_seed.to_bytes(16, "little"))
    for idx in path:
        h.update(int(idx).to_bytes(16, "little", signed=True))
    return int.from_bytes(h.digest(), "little")


def stream(root_seed: int, *path: int) -> random.Random:
    """A deterministic uniform-bit source for the given stream path.

    The returned generator exposes ``randrange``; callers must not share one
    stream across threads.
    """
    return random.Random(derive_seed(root_seed, *path))
