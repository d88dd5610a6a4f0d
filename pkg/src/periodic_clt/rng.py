"""Named, counter-based random streams.

Every stream is a Philox generator keyed by ``(seed, *path)`` where ``path``
is a tuple of small integers or strings (hashed with CRC32).  Two calls with
the same seed and path give identical streams regardless of the order or the
thread they run on.
"""

from __future__ import annotations

from zlib import crc32

import numpy as np

NUM_BATCHES = 16


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream path integers must be nonnegative")
        return int(part)
    return crc32(str(part).encode("utf-8"))


def stream(seed: int, *path) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def batch_sizes(count: int, batches: int = NUM_BATCHES) -> list:
    """Split ``count`` into ``batches`` near-equal parts (larger ones first)."""
    q, r = divmod(int(count), batches)
    return [q + (1 if b < r else 0) for b in range(batches)]
