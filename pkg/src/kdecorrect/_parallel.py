"""Row-chunked fan-out over a thread pool.

Chunk boundaries depend only on the row count, never on the worker count,
so results are identical for any KDECORRECT_THREADS setting.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

CHUNK_ROWS = 256
ENV_THREADS = "KDECORRECT_THREADS"


def worker_count() -> int:
    raw = os.environ.get(ENV_THREADS, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return n


def chunks(n: int, size: int = CHUNK_ROWS) -> list[tuple[int, int]]:
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def for_each_chunk(n: int, fn: Callable[[int, int], None], size: int = CHUNK_ROWS) -> None:
    """Call ``fn(start, stop)`` for every row chunk of ``range(n)``.

    ``fn`` must write its results into disjoint slices of preallocated arrays.
    """
    parts = chunks(n, size)
    workers = min(worker_count(), len(parts))
    if workers <= 1:
        for s, e in parts:
            fn(s, e)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # list() re-raises worker exceptions
        list(pool.map(lambda se: fn(*se), parts))
