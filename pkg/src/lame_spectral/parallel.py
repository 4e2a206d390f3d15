"""
Trial scheduling.

Independent trials run on a thread pool capped by the configured job count;
numpy and scipy.fft release the GIL in their kernels. Results come back in
submission order so reductions never depend on scheduling.
"""

from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

import numpy as np
import structlog

from .config import config

logger = structlog.get_logger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(func: Callable[[T], R], items: Iterable[T], jobs: int | None = None) -> list[R]:
    """Apply func to every item, in order, on at most `jobs` threads."""
    work = list(items)
    workers = max(1, min(jobs or config.jobs, len(work) or 1))
    if workers == 1:
        return [func(item) for item in work]
    logger.debug("Running trials in parallel", trials=len(work), workers=workers)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, work))


def trial_generators(seed: int, trials: int) -> list[np.random.Generator]:
    """One independent generator per trial, spawned from SeedSequence(seed)."""
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(trials)]
