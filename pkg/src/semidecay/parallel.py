"""Order-preserving parallel map.

Results are written by index, so the output never depends on the worker count
or on scheduling.  numpy/scipy release the GIL in the heavy kernels, which is
enough for the per-``t`` and per-experiment fan-out used here.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable


def pmap(fn: Callable, items: Iterable, workers: int = 1) -> list:
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
