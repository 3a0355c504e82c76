from __future__ import annotations

import numpy as np
import pytest

from vrsim.errors import SchedulerError
from vrsim.models import DelayMode
from vrsim.services.dm_sim import run_synthesis_dm
from vrsim.services.experiments import dataset_for
from vrsim.services.scheduler import (
    DirectScheduler,
    ServiceTimeScheduler,
    schedule_delays,
)


class QueuedDraws:
    """Stands in for the delay stream with a fixed sequence of staleness draws."""

    def __init__(self, values):
        self._values = iter(values)

    def integers(self, low, high):
        value = next(self._values)
        assert low <= value < high
        return value


def test_zero_delay_applies_in_the_pull_slot():
    scheduler = DirectScheduler(np.random.default_rng(0), 1, 0)
    t = 0
    for _ in range(20):
        apply_time = scheduler.place(0, t)
        assert apply_time == t
        scheduler.release(apply_time)
        t = scheduler.pull_time_after(apply_time)


def test_single_worker_follows_the_delay_stream_draw_for_draw():
    scheduler = DirectScheduler(np.random.default_rng(42), 1, 3)
    reference = np.random.default_rng(42)
    t = 0
    for _ in range(200):
        apply_time = scheduler.place(0, t)
        assert apply_time - t == int(reference.integers(0, 4))
        scheduler.release(apply_time)
        t = scheduler.pull_time_after(apply_time)


def test_lower_worker_wins_a_contested_slot():
    scheduler = DirectScheduler(QueuedDraws([1, 1]), 2, 2)
    assert scheduler.place(0, 5) == 6
    assert scheduler.place(1, 5) == 7


def test_slot_past_the_bound_is_redrawn():
    scheduler = DirectScheduler(QueuedDraws([1, 1, 0]), 2, 1)
    assert scheduler.place(0, 5) == 6
    assert scheduler.place(1, 5) == 5


def test_infeasible_direct_placement_advises_service_time():
    scheduler = DirectScheduler(np.random.default_rng(0), 2, 0)
    scheduler.place(0, 0)
    with pytest.raises(SchedulerError, match="service-time"):
        scheduler.place(1, 0)


def test_reset_frees_every_slot():
    scheduler = DirectScheduler(np.random.default_rng(0), 2, 0)
    scheduler.place(0, 0)
    scheduler.reset()
    assert scheduler.place(1, 0) == 0


def test_service_time_durations():
    scheduler = ServiceTimeScheduler(np.random.default_rng(3), 4, 2)
    durations = [scheduler.place(0, 10) - 10 for _ in range(500)]
    assert set(durations) == {1, 2, 3}
    assert scheduler.span(10, 13) == 3
    assert scheduler.pull_time_after(13) == 13


def test_factory_picks_the_mode():
    rng = np.random.default_rng(0)
    assert isinstance(schedule_delays(rng, 2, 1, DelayMode.DIRECT), DirectScheduler)
    assert isinstance(schedule_delays(rng, 2, 1, DelayMode.SERVICE_TIME), ServiceTimeScheduler)


def test_negative_delay_bound_is_rejected():
    with pytest.raises(SchedulerError):
        DirectScheduler(np.random.default_rng(0), 1, -1)


# ── simulated runs ─────────────────────────────────────


FUZZ = [
    (delta, workers, seed)
    for delta in range(9)
    for workers in range(1, delta + 2)
    for seed in range(5)
]


def test_fuzz_grid_has_two_hundred_runs():
    assert len(FUZZ) >= 200


@pytest.mark.parametrize("delta,workers,seed", FUZZ)
def test_realized_staleness_never_exceeds_bound(run_config, delta, workers, seed):
    config = run_config(N=81, d=2, P=workers, delta=delta, K=60, q=12, seed=seed, eval_every=1)
    trace = run_synthesis_dm(config, dataset_for(config))
    assert trace.max_tau <= delta
    inner = trace.frame[trace.frame["sync"] == 0]
    assert inner["tau"].between(0, delta).all()
    assert (inner["lag"] <= inner["tau"]).all()


def test_direct_mode_run_with_too_many_workers_fails(run_config):
    config = run_config(P=2, delta=0)
    with pytest.raises(SchedulerError):
        run_synthesis_dm(config, dataset_for(config))


def test_service_time_mode_handles_many_workers(run_config):
    config = run_config(P=6, delta=1, delay_mode="service-time", K=200, q=10, eval_every=1)
    dataset = dataset_for(config)
    trace = run_synthesis_dm(config, dataset)
    again = run_synthesis_dm(config, dataset)
    assert trace.max_tau == trace.frame["tau"].max()
    assert trace.csv_text() == again.csv_text()
