"""Per-path random streams and ordered block execution.

Path ``p`` under master seed ``s`` always draws from
``SeedSequence(s, spawn_key=(p,))``, so any split of the paths into blocks,
and any number of worker threads, produces the same numbers.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

BLOCK = 1024


def path_generator(seed: int, path: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(path),)))


def path_normals(seed: int, paths: Sequence[int], steps: int, dim: int) -> np.ndarray:
    """Standard normals of shape ``(len(paths), steps, dim)``, one stream per path."""
    out = np.empty((len(paths), steps, dim))
    for row, p in enumerate(paths):
        out[row] = path_generator(seed, p).standard_normal((steps, dim))
    return out


def blocks(paths: int, block: int = BLOCK) -> list[range]:
    return [range(a, min(a + block, paths)) for a in range(0, paths, block)]


def map_blocks(fn: Callable[[range], T], paths: int, threads: int = 1, block: int = BLOCK) -> list[T]:
    """Apply ``fn`` to each block of path indices; results come back in block order."""
    chunks = blocks(paths, block)
    if threads <= 1 or len(chunks) == 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, chunks))
