"""Optional per-image parallelism, capped by the NCIS_THREADS env var.

Work is always split into fixed-size chunks and reassembled in order, so the
numbers coming out are identical whatever the thread count; threads only
decide how many chunks run concurrently.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK = 32


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("NCIS_THREADS", "1")))
    except ValueError:
        return 1


def chunked_map(fn, *arrays: np.ndarray) -> np.ndarray:
    """Apply ``fn`` to aligned CHUNK-sized slices of the input arrays and
    concatenate the results in order."""
    n = len(arrays[0])
    spans = [(s, min(s + CHUNK, n)) for s in range(0, n, CHUNK)]
    jobs = [tuple(a[lo:hi] for a in arrays) for lo, hi in spans]
    workers = worker_count()
    if workers == 1 or len(jobs) == 1:
        parts = [fn(*job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: fn(*job), jobs))
    return np.concatenate(parts, axis=0)
