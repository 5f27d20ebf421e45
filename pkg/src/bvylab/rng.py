"""Counter-based random streams and worker-count-independent parallel mapping.

Every estimator in this package draws randomness from a Philox stream keyed
by (seed, *path), where path is a tuple of small integers identifying the
task (scenario step, ladder rung, chunk index, ...).  Philox is counter
based, so streams for distinct paths never collide and never depend on how
work is scheduled.  Parallel execution therefore cannot change any result:
tasks are keyed by index, and reductions run in index order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

__all__ = ["substream", "worker_count", "parallel_map"]


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return the Philox generator for task `path` under root `seed`."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(i) for i in path))
    return np.random.Generator(np.random.Philox(ss))


def worker_count() -> int:
    """Parallelism level from the WORKERS environment variable (default 1)."""
    raw = os.environ.get("WORKERS", "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def parallel_map(fn, n_tasks: int) -> list:
    """Map fn over range(n_tasks), in parallel if WORKERS > 1.

    fn must be pure given the task index (seed its own substream).  The
    returned list is in task order, so results are identical for any
    worker count.
    """
    if n_tasks <= 0:
        return []
    workers = worker_count()
    if workers <= 1 or n_tasks == 1:
        return [fn(i) for i in range(n_tasks)]
    with ThreadPoolExecutor(max_workers=min(workers, n_tasks)) as pool:
        return list(pool.map(fn, range(n_tasks)))
