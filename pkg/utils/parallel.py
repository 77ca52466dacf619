# utils/parallel.py
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, TypeVar

from config import thread_count

logger = logging.getLogger(__name__)

T = TypeVar("T")


def run_blocks(task: Callable[[int], T], n_blocks: int, threads: Optional[int] = None) -> List[T]:
    """Run task(0..n_blocks-1) and return results in index order, whatever the worker count."""
    workers = min(thread_count(threads), max(n_blocks, 1))
    if workers <= 1:
        return [task(i) for i in range(n_blocks)]
    logger.debug("running %d blocks on %d threads", n_blocks, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, range(n_blocks)))
