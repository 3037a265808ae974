"""Replica-parallel map.

Work is split into contiguous replica ranges; every range derives its random
streams from the replica indices alone, so the merged result is the same for
any worker count.
"""
from __future__ import annotations

import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Optional

_WORKERS: Optional[int] = None
_FN: Optional[Callable] = None


def set_workers(n: Optional[int]) -> None:
    global _WORKERS
    _WORKERS = None if n is None else max(1, int(n))


def configured() -> Optional[int]:
    """The explicit worker setting (None when deferring to RFIM_WORKERS)."""
    return _WORKERS


def workers() -> int:
    if _WORKERS is not None:
        return _WORKERS
    env = os.environ.get("RFIM_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def chunks(n: int, parts: int) -> list:
    parts = max(1, min(parts, n)) if n > 0 else 1
    edges = [n * k // parts for k in range(parts + 1)]
    return [(edges[k], edges[k + 1]) for k in range(parts) if edges[k + 1] > edges[k]]


def map_ranges(fn: Callable, n: int, n_workers: Optional[int] = None, per_worker: int = 4) -> list:
    """[fn(lo, hi) for each range], ranges covering 0..n-1 in order."""
    w = workers() if n_workers is None else max(1, int(n_workers))
    if w == 1 or n <= 1:
        return [fn(lo, hi) for lo, hi in chunks(n, 1)]
    global _FN
    ranges = chunks(n, w * per_worker)
    ctx = mp.get_context("fork")
    # closures do not pickle; forked workers inherit _FN and receive only (lo, hi)
    saved, _FN = _FN, fn
    try:
        with ProcessPoolExecutor(max_workers=w, mp_context=ctx) as ex:
            futs = [ex.submit(_call, lo, hi) for lo, hi in ranges]
            return [f.result() for f in futs]
    finally:
        _FN = saved


def _call(lo: int, hi: int):
    return _FN(lo, hi)
