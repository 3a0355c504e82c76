"""
Delay scheduling.

Both modes place jobs on an integer clock. In direct mode the clock counts
server slots, one application per slot at most, and a job's staleness is drawn
explicitly; in service-time mode every job occupies a random number of ticks
and staleness is whatever the interleaving produces.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod

import numpy as np

from vrsim.errors import SchedulerError
from vrsim.models import DelayMode
from vrsim.services.vr_core import Job

logger = logging.getLogger(__name__)

MAX_REDRAWS = 1000


class DelayScheduler(ABC):
    mode: DelayMode

    def __init__(self, rng: np.random.Generator, workers: int, max_delay: int):
        if max_delay < 0:
            raise SchedulerError(f"max delay must be non-negative, got {max_delay}")
        self.rng = rng
        self.workers = workers
        self.max_delay = max_delay

    @abstractmethod
    def place(self, worker_id: int, pull_time: int) -> int:
        """Clock time at which a job pulled at ``pull_time`` is applied."""

    @abstractmethod
    def span(self, pull_time: int, apply_time: int) -> int:
        """Clock units of work a job occupies."""

    @abstractmethod
    def staleness(self, job: Job) -> int:
        ...

    @abstractmethod
    def pull_time_after(self, apply_time: int) -> int:
        ...

    def sync_time(self, clock: int) -> int:
        return clock + 1

    def release(self, apply_time: int) -> None:
        pass

    def reset(self) -> None:
        pass


class DirectScheduler(DelayScheduler):
    """Staleness s ~ U{0..Δ} per job, resolved to the earliest free slot."""

    mode = DelayMode.DIRECT

    def __init__(self, rng: np.random.Generator, workers: int, max_delay: int):
        super().__init__(rng, workers, max_delay)
        self._occupied: set[int] = set()

    def place(self, worker_id: int, pull_time: int) -> int:
        for attempt in range(MAX_REDRAWS):
            slot = pull_time + int(self.rng.integers(0, self.max_delay + 1))
            while slot in self._occupied:
                slot += 1
            if slot - pull_time <= self.max_delay:
                self._occupied.add(slot)
                return slot
            logger.debug("worker %d: slot %d exceeds delay bound, redraw %d", worker_id, slot, attempt + 1)

        if self.workers <= self.max_delay + 1:
            for slot in range(pull_time, pull_time + self.max_delay + 1):
                if slot not in self._occupied:
                    self._occupied.add(slot)
                    return slot
        raise SchedulerError(
            f"no slot within delay bound {self.max_delay} for worker {worker_id} after {MAX_REDRAWS} draws "
            f"({self.workers} workers); use delay_mode = 'service-time' when P > delta + 1"
        )

    def span(self, pull_time: int, apply_time: int) -> int:
        return apply_time - pull_time + 1

    def staleness(self, job: Job) -> int:
        return job.apply_time - job.pull_time

    def pull_time_after(self, apply_time: int) -> int:
        return apply_time + 1

    def release(self, apply_time: int) -> None:
        self._occupied.discard(apply_time)

    def reset(self) -> None:
        self._occupied.clear()


class ServiceTimeScheduler(DelayScheduler):
    """Each job takes U{1..Δ+1} ticks; staleness is measured, not imposed."""

    mode = DelayMode.SERVICE_TIME

    def place(self, worker_id: int, pull_time: int) -> int:
        return pull_time + int(self.rng.integers(1, self.max_delay + 2))

    def span(self, pull_time: int, apply_time: int) -> int:
        return apply_time - pull_time

    def staleness(self, job: Job) -> int:
        return job.k_apply - job.k_pull

    def pull_time_after(self, apply_time: int) -> int:
        return apply_time


def schedule_delays(rng: np.random.Generator, workers: int, max_delay: int, mode: DelayMode) -> DelayScheduler:
    """Scheduler for ``mode`` drawing from the run's delay stream."""
    if mode == DelayMode.SERVICE_TIME:
        return ServiceTimeScheduler(rng, workers, max_delay)
    return DirectScheduler(rng, workers, max_delay)
