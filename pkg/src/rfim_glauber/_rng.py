"""Counter-based random streams.

Every random quantity in the package is drawn from a stream keyed by
``(master seed, tag, index...)``.  Streams are Philox generators built from a
``SeedSequence`` whose spawn key encodes the tag, so the draws of replica ``r``
never depend on how replicas are distributed over workers.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key(k) -> int:
    if isinstance(k, (int, np.integer)):
        if k < 0:
            raise ValueError("stream keys must be non-negative")
        return int(k)
    return zlib.crc32(str(k).encode("utf8"))


def stream(seed: int, *keys) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def kernel_seeds(seed: int, tag, lo: int, hi: int) -> np.ndarray:
    """32-bit seeds for replicas ``lo..hi-1`` of a compiled kernel.

    ``generate_state`` is prefix-stable, so slicing gives the same seed for a
    replica index whatever chunk it lands in.
    """
    if hi <= lo:
        return np.zeros(0, dtype=np.int64)
    ss = np.random.SeedSequence(int(seed), spawn_key=(_key(tag),))
    return ss.generate_state(hi, dtype=np.uint32)[lo:hi].astype(np.int64)
