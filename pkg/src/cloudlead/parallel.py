"""Ordered job execution over a process pool with single-threaded BLAS per worker.

Every job carries its own seed, BLAS runs one thread per process and results
come back in submission order, so the worker count never changes the output.
"""
from __future__ import annotations

import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

from threadpoolctl import threadpool_limits

from .core import ConfigError

THREADS_ENV = "CLOUDLEAD_THREADS"

J = TypeVar("J")
R = TypeVar("R")


def resolve_threads(threads: int | None = None) -> int:
    """Explicit value, else ``$CLOUDLEAD_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get(THREADS_ENV, "").strip()
        if not env:
            return 1
        try:
            threads = int(env)
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV}={env!r} is not an integer") from exc
    if threads < 1:
        raise ConfigError(f"threads={threads} must be >= 1")
    return threads


def _worker_init() -> None:
    threadpool_limits(1)


def run_jobs(fn: Callable[[J], R], jobs: Iterable[J], threads: int | None = None) -> list[R]:
    """``[fn(j) for j in jobs]``, optionally spread over ``threads`` processes."""
    jobs = list(jobs)
    n = min(resolve_threads(threads), max(1, len(jobs)))
    if n == 1:
        with threadpool_limits(1):
            return [fn(j) for j in jobs]
    ctx = mp.get_context("spawn")
    with ProcessPoolExecutor(max_workers=n, mp_context=ctx, initializer=_worker_init) as pool:
        return list(pool.map(fn, jobs))
