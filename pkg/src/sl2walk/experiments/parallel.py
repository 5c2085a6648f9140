"""Trial-level parallelism with worker-count independent random streams.

The trial range is cut into fixed-size chunks. Chunk ``k`` of stream ``tag``
draws from ``Philox(SeedSequence(seed, spawn_key=(*tag, k)))``, so its letters
do not depend on which worker runs it; results are concatenated in ascending
chunk order.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

CHUNK = 8192


def stream_tag(name: str, *extra: int) -> tuple[int, ...]:
    return (zlib.crc32(name.encode()),) + tuple(int(e) for e in extra)


def chunk_rng(seed: int, tag: tuple[int, ...], chunk: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(tag) + (int(chunk),))
    return np.random.Generator(np.random.Philox(ss))


def run_chunks(
    seed: int,
    tag: tuple[int, ...],
    trials: int,
    fn: Callable[[np.random.Generator, int], dict],
    workers: int = 1,
    chunk: int = CHUNK,
) -> dict:
    """Run ``fn(rng, size)`` over all chunks and concatenate the returned arrays key-wise."""
    sizes = [min(chunk, trials - lo) for lo in range(0, trials, chunk)]

    def job(k):
        return fn(chunk_rng(seed, tag, k), sizes[k])

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    else:
        parts = [job(k) for k in range(len(sizes))]
    return {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}
