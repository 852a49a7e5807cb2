"""Thread-count control and an order-preserving parallel map."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def thread_count() -> int:
    """Worker cap from ``VORTEXFLOW_THREADS`` (``0`` or unset means ``os.cpu_count()``)."""
    raw = os.environ.get("VORTEXFLOW_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"VORTEXFLOW_THREADS must be an integer, got {raw!r}") from exc
    if n < 0:
        raise ValueError("VORTEXFLOW_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def ordered_map(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """``[fn(x) for x in items]``, possibly evaluated concurrently.

    Results come back in input order, so any reduction over them is
    independent of scheduling."""
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
