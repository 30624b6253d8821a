"""Deterministic fan-out helper.

Worker count comes from the TWINFORGE_THREADS environment variable (default 1).
Results are always merged in input order, so output never depends on scheduling.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    try:
        n = int(os.environ.get("TWINFORGE_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def parallel_map(fn, items, workers=None):
    items = list(items)
    n = worker_count() if workers is None else max(1, workers)
    if n == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
