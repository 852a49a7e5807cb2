"""Counter-based random streams keyed by (seed, stream, block)."""
from __future__ import annotations

import numpy as np

#: paths per RNG block; fixed so results do not depend on how work is split
BLOCK = 4096


def generator(seed: int, *key: int) -> np.random.Generator:
    """Independent Philox generator for the integer key ``(seed, *key)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, key)])))


def blocks(total: int, size: int = BLOCK) -> list[tuple[int, int, int]]:
    """``(block_index, start, stop)`` triples covering ``range(total)``."""
    return [(b, s, min(s + size, total)) for b, s in enumerate(range(0, total, size))]
