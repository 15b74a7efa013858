"""Bounded parallel execution of independent solves."""
from __future__ import annotations

import asyncio
import logging
from typing import Callable, Sequence, TypeVar

from utils.config import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")


async def gather_limited(calls: Sequence[Callable[[], T]], jobs: int | None = None) -> list[T]:
    """Run blocking callables on worker threads, at most ``jobs`` at a time, keeping submission order."""
    jobs = max(1, settings.jobs if jobs is None else jobs)
    semaphore = asyncio.Semaphore(jobs)

    async def run(call: Callable[[], T]) -> T:
        async with semaphore:
            return await asyncio.to_thread(call)

    return list(await asyncio.gather(*(run(c) for c in calls)))


def run_parallel(calls: Sequence[Callable[[], T]], jobs: int | None = None) -> list[T]:
    """Synchronous front end; with one job the calls simply run in order."""
    jobs = max(1, settings.jobs if jobs is None else jobs)
    if jobs == 1 or len(calls) <= 1:
        return [c() for c in calls]
    logger.debug(f"run_parallel: {len(calls)} calls on {jobs} workers")
    return asyncio.run(gather_limited(calls, jobs))
