"""Thread-count resolution and order-preserving chunked execution.

Work is always cut into the same fixed-size chunks regardless of the thread
count, and results are reassembled in chunk order, so output does not depend
on how many workers ran.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, TypeVar

from .errors import ParameterError

T = TypeVar("T")

THREADS_ENV = "MARGIN_MINER_THREADS"
DEFAULT_CHUNK = 1024


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        raw = os.environ.get(THREADS_ENV, "").strip()
        if not raw:
            return 1
        try:
            threads = int(raw)
        except ValueError:
            raise ParameterError(f"{THREADS_ENV}={raw!r} is not an integer") from None
    if threads < 1:
        raise ParameterError(f"thread count must be >= 1, got {threads}")
    return threads


def chunk_bounds(n: int, chunk: int = DEFAULT_CHUNK) -> List[tuple]:
    return [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]


def map_chunks(
    fn: Callable[[int, int], T], n: int, threads: int = 1, chunk: int = DEFAULT_CHUNK
) -> List[T]:
    """Apply ``fn(lo, hi)`` to consecutive row ranges of ``[0, n)``."""
    bounds = chunk_bounds(n, chunk)
    if threads <= 1 or len(bounds) <= 1:
        return [fn(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda b: fn(*b), bounds))
