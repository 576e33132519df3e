"""Optional worker parallelism for per-sample pure functions.

SYNTHLABEL_THREADS caps the pool size (0 or 1 = serial, the default).
Workers only ever evaluate pure functions of their arguments and results are
collected in input order, so output is bit-identical to the serial schedule.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

from .errors import ParameterError

A = TypeVar("A")
R = TypeVar("R")


def thread_count() -> int:
    raw = os.environ.get("SYNTHLABEL_THREADS", "0")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ParameterError(
            f"SYNTHLABEL_THREADS must be an integer, got {raw!r}"
        ) from exc
    return max(0, n)


def ordered_map(fn: Callable[[A], R], items: Sequence[A]) -> list[R]:
    """map() preserving order; threaded when SYNTHLABEL_THREADS > 1."""
    n = thread_count()
    if n <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
