"""
Process pool for grid sweeps. Tasks are immutable and picklable; results come back in task
order, so everything downstream is independent of how many workers ran the tasks.
"""

import logging
import os
from multiprocessing import Pool
from typing import Callable, Iterable, Optional, Sequence, TypeVar

from django.conf import settings

from fkwalk.fkwalk.errors import UsageError

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def resolve_workers(workers: Optional[int] = None) -> int:
    """
    Worker count to use: the explicit value, else FKWALK_WORKERS; 0 means one per CPU.
    """
    if workers is None:
        workers = getattr(settings, "FKWALK_WORKERS", 0) if settings.configured else 0
    if workers < 0:
        raise UsageError(f"Worker count must be non-negative, got {workers}")
    if workers == 0:
        workers = os.cpu_count() or 1
    return workers


def run_tasks(
    fn: Callable[[T], R],
    tasks: Sequence[T],
    workers: Optional[int] = None,
    progress: Optional[Callable[[int, int, R], None]] = None,
) -> list[R]:
    """
    Apply ``fn`` to every task and return the results in task order.

    A single worker, or a single task, runs in-process. ``progress`` is called after each
    completed task with (done, total, result).
    """
    workers = min(resolve_workers(workers), max(len(tasks), 1))
    total = len(tasks)
    results: list[R] = []

    def collect(outputs: Iterable[R]) -> None:
        for result in outputs:
            results.append(result)
            if progress is not None:
                progress(len(results), total, result)

    if workers == 1:
        collect(fn(task) for task in tasks)
    else:
        logger.debug(f"Starting a pool of {workers} workers for {total} tasks")
        with Pool(processes=workers) as pool:
            collect(pool.imap(fn, tasks))
    return results
