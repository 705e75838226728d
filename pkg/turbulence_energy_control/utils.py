"""Shared utility functions and classes for the application."""
import logging
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from typing import Callable, Generator, Iterable, TypeVar, TYPE_CHECKING

import numpy as np

from turbulence_energy_control.config import THREADS

if TYPE_CHECKING:
    from turbulence_energy_control.services.monitoring_service import MonitoringService

T = TypeVar("T")
R = TypeVar("R")

# Purpose tags keep the random streams of different simulation phases apart
ENSEMBLE_STREAM = 0
KERNEL_STREAM = 1


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, cause: BaseException) -> None:
        super().__init__(f"Stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@contextmanager
def stage_manager(monitoring_service: "MonitoringService", stage: str) -> Generator[None, None, None]:
    """
    Provide a tracked scope around one pipeline stage.
    Handles stage start, completion, failure marking and error wrapping.
    """
    monitoring_service.start_stage(stage)
    try:
        yield
        monitoring_service.complete_stage(stage)
    except StageError:
        raise
    except Exception as e:
        logging.error(f"Stage {stage} aborted due to exception: {e}", exc_info=True)
        monitoring_service.fail_stage(stage, str(e))
        raise StageError(stage, e) from e


def parallel_map(func: Callable[[T], R], items: Iterable[T], max_workers: int | None = None) -> list[R]:
    """Map func over items on the worker pool, keeping input order.

    Args:
        func: Function applied to every item
        items: Work items
        max_workers: Worker cap (defaults to STATCTRL_THREADS)

    Returns:
        list[R]: Results in the order of items
    """
    work = list(items)
    workers = min(max_workers or THREADS, len(work)) if work else 1
    if workers <= 1:
        return [func(item) for item in work]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, work))


def derive_stream(seed: int, tag: int, index: int) -> np.random.Generator:
    """Random stream for chunk `index` of phase `tag`, independent of thread count."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(tag, index)))
