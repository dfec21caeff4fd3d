"""Counter-based random streams keyed by (seed, stream index)."""
from __future__ import annotations

import numpy as np

SHARD_SIZE = 1 << 16


def stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Independent Philox generator for ``(seed, stream_id)``; stable across runs and platforms."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.Philox(ss))


def shard_plan(N: int, shard_size: int = SHARD_SIZE) -> list[tuple[int, int]]:
    """``(stream_id, count)`` pairs covering ``N`` draws in fixed-size shards."""
    N = int(N)
    return [(i, min(shard_size, N - i * shard_size)) for i in range((N + shard_size - 1) // shard_size)]
