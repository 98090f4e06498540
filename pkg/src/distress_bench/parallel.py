"""Order-preserving worker pool; results never depend on the worker count."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

_threads = 1


def set_threads(n: int) -> None:
    global _threads
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _threads = int(n)


def get_threads() -> int:
    return _threads


def pmap(fn, items):
    items = list(items)
    if _threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=_threads) as ex:
        return list(ex.map(fn, items))
