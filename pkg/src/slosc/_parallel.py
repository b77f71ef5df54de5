"""Optional thread parallelism for lambda/x scans.

The environment variable ``SLOSC_THREADS`` caps the worker count; the
default is 1 (serial).  All mapped functions are pure, and results keep
input order, so output is identical at any thread count.  The numba
kernels release the GIL, so threads give real speedup on scans.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def max_workers() -> int:
    raw = os.environ.get("SLOSC_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def parallel_map(fn, items):
    items = list(items)
    workers = min(max_workers(), len(items)) if items else 1
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
