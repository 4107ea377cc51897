"""Shared runtime helpers: deterministic parallel mapping over independent work items."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
U = TypeVar("U")


def effective_threads(threads: int) -> int:
    """Thread count after honoring the YR_DETERMINISTIC=1 single-thread override."""
    if os.environ.get("YR_DETERMINISTIC") == "1":
        return 1
    return max(1, int(threads))


def parallel_map(fn: Callable[[T], U], items: Iterable[T], threads: int = 1) -> list[U]:
    """Map fn over items, optionally on a thread pool.

    Results are returned in input order and each item is computed independently,
    so the output is identical for any thread count.
    """
    seq: Sequence[T] = list(items)
    threads = effective_threads(threads)
    if threads <= 1 or len(seq) <= 1:
        return [fn(x) for x in seq]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, seq))
