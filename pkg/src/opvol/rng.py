"""Deterministic random-stream derivation and fixed-chunk parallelism.

Every consumer of randomness gets a counter-based stream derived from
(master seed, stream tag, block index), so results never depend on worker
count or scheduling: work is split into fixed-size blocks of path indices,
each block owns its stream, and reductions happen in block order.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np

__all__ = ["STREAM_TAGS", "seed_derivation", "fixed_chunks", "map_chunks", "CHUNK_SIZE"]

STREAM_TAGS = {
    "driver": 1,  # jump times, counts and marks of the Levy driver
    "wiener": 2,  # Gaussian increments of the price noise (independent of the driver)
    "marks": 3,  # standalone mark sampling (distributional checks)
    "operators": 4,  # generation of random test operators / vectors
    "probe": 5,  # miscellaneous diagnostics
}

CHUNK_SIZE = 16384


def seed_derivation(master_seed: int, index: int, tag) -> np.random.Generator:
    """Counter-based stream for (seed, block index, tag); collision free.

    Distinct tags give statistically independent streams for the same index,
    which is how driver and Wiener randomness are kept independent.
    """
    tag_id = STREAM_TAGS[tag] if isinstance(tag, str) else int(tag)
    ss = np.random.SeedSequence(entropy=(int(master_seed), tag_id, int(index)))
    return np.random.Generator(np.random.Philox(ss))


def fixed_chunks(total: int, chunk_size: int = CHUNK_SIZE):
    """(index, start, stop) blocks; independent of the worker count."""
    out = []
    start = 0
    idx = 0
    while start < total:
        stop = min(start + chunk_size, total)
        out.append((idx, start, stop))
        start = stop
        idx += 1
    return out


def map_chunks(fn, args_list, workers: int):
    """Apply ``fn`` over the argument list, reducing in submission order.

    ``workers == 1`` runs inline; more workers use a process pool.  Either
    way the outputs are identical because every chunk owns its stream.
    """
    if workers <= 1 or len(args_list) <= 1:
        return [fn(a) for a in args_list]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, args_list))
