"""Fixed sharding of a scene batch across a thread pool.

Scenes are split into the same contiguous shards no matter how many
workers run them, and results are reassembled in shard order, so output
is bitwise identical for any worker count.  numpy releases the GIL inside
its kernels, which is where threads gain on a multi-core host.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np


def shard_bounds(num_items: int, num_shards: int):
    """Contiguous ``(start, stop)`` ranges; never more shards than items."""
    num_shards = max(1, min(num_shards, num_items))
    edges = np.linspace(0, num_items, num_shards + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


class WorkerPool:
    def __init__(self, workers: int = 1):
        if workers < 1:
            raise ValueError("workers must be at least 1")
        self.workers = workers
        self._pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def map(self, fn, items):
        items = list(items)
        if self._pool is None or len(items) == 1:
            return [fn(x) for x in items]
        return list(self._pool.map(fn, items))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
