"""Thread-pool helper honoring the SPECSTAB_THREADS cap.

Work items are independent and seeded individually, so results do not
depend on scheduling; outputs are returned in input order.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

__all__ = ["max_workers", "parallel_map"]


def max_workers() -> int:
    cap = os.environ.get("SPECSTAB_THREADS")
    hw = min(os.cpu_count() or 1, 8)
    if cap is None:
        return hw
    try:
        return max(1, min(int(cap), hw))
    except ValueError:
        return hw


def parallel_map(fn, items):
    """Map fn over items, in parallel when allowed; order-preserving."""
    items = list(items)
    workers = min(max_workers(), max(len(items), 1))
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
