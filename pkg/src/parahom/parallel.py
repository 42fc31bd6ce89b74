"""Ensemble execution with seed-ordered aggregation.

Work items are independent and keyed by position; results always come back
in input order, so the thread count never changes any output. The compiled
kernels release the GIL, which is what makes threads worthwhile here.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List

_DEFAULT_THREADS = 1


def set_default_threads(n: int):
    global _DEFAULT_THREADS
    if n < 1:
        raise ValueError("threads must be >= 1")
    _DEFAULT_THREADS = int(n)


def default_threads() -> int:
    return _DEFAULT_THREADS


def ensemble_map(fn: Callable, items: Iterable, threads: int = None) -> List:
    items = list(items)
    threads = threads or _DEFAULT_THREADS
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))
