"""Small shared helpers."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def round_half_up(x: float) -> int:
    import math

    return int(math.floor(x + 0.5))


def pmap(fn, items, threads: int = 1) -> list:
    """Order-preserving map, optionally over a thread pool.

    Results are assembled in input order, so the output is identical for any
    thread count.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
