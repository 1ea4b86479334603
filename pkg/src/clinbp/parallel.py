from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def available_threads() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


def parallel_map(fn, items, threads: int = 1) -> list:
    """Ordered map. Tasks must carry their own seeds; results never depend on
    ``threads``."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
