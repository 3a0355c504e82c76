from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from vrsim.errors import SimulationError
from vrsim.models import ModelKind
from vrsim.services.data import draw_batch, synthesize
from vrsim.services.objective import LogisticModel, QuadraticModel
from vrsim.services.vr_core import (
    NO_ESTIMATE,
    Job,
    SfoCounter,
    WorkerState,
    local_full_grad,
    outer_sync,
    vr_update,
)


def _synced(shard, x, v):
    state = WorkerState(0, shard)
    outer_sync(state, x, v)
    return state


def test_unchanged_point_keeps_estimate():
    dataset = synthesize(ModelKind.LOGISTIC, 20, 3, seed=0)
    model = LogisticModel(3, reg=0.1)
    x = np.array([0.2, -0.1, 0.4])
    v = np.array([1.0, 2.0, 3.0])
    state = _synced(range(20), x, v)
    assert_array_equal(vr_update(state, x.copy(), np.array([1, 4, 7]), model, dataset), v)


def test_hand_computed_update(line_dataset):
    state = _synced(range(2), np.zeros(1), np.zeros(1))
    v_new = vr_update(state, np.array([0.5]), np.array([0, 1]), QuadraticModel(1), line_dataset)
    assert_allclose(v_new, [0.5])
    assert_array_equal(state.x_old, [0.5])
    assert_array_equal(state.v_old, v_new)


def test_full_batch_telescopes_to_exact_gradient():
    dataset = synthesize(ModelKind.QUADRATIC, 30, 4, seed=1)
    model = QuadraticModel(4, np.diag([1.0, 2.0, 0.5, 3.0]))
    rng = np.random.default_rng(2)
    x = rng.normal(size=4)
    state = _synced(range(30), x, model.full_grad(x, dataset))
    everything = np.arange(30)
    for _ in range(25):
        x = x + rng.normal(scale=0.3, size=4)
        v = vr_update(state, x, everything, model, dataset)
        assert_allclose(v, model.full_grad(x, dataset), rtol=1e-10, atol=1e-12)


def test_sync_then_update_at_sync_point_returns_broadcast():
    dataset = synthesize(ModelKind.LOGISTIC, 20, 3, seed=4)
    model = LogisticModel(3)
    x = np.array([0.1, 0.2, 0.3])
    v = model.full_grad(x, dataset)
    state = WorkerState(1, range(10, 20))
    state.in_flight = Job(7, 1, NO_ESTIMATE, 0, 0, 2, 3, x)
    outer_sync(state, x, v, token=-2)
    assert state.in_flight is None
    assert state.produced == -2
    assert_array_equal(vr_update(state, x.copy(), np.array([11, 15]), model, dataset), v)


def test_sync_state_matches_across_workers():
    x, v = np.array([1.0, -1.0]), np.array([0.5, 0.25])
    a, b = _synced(range(0, 5), x, v), _synced(range(5, 10), x, v)
    assert_array_equal(a.x_old, b.x_old)
    assert_array_equal(a.v_old, b.v_old)
    assert a.shard != b.shard


def test_update_before_sync_is_an_error(line_dataset):
    with pytest.raises(SimulationError, match="outer sync"):
        vr_update(WorkerState(0, range(2)), np.zeros(1), np.array([0]), QuadraticModel(1), line_dataset)


def test_empty_batch_is_an_error(line_dataset):
    state = _synced(range(2), np.zeros(1), np.zeros(1))
    with pytest.raises(SimulationError, match="empty batch"):
        vr_update(state, np.zeros(1), np.array([], dtype=int), QuadraticModel(1), line_dataset)


def test_update_charges_two_evaluations_per_sample(line_dataset):
    counter = SfoCounter()
    state = _synced(range(2), np.zeros(1), np.zeros(1))
    vr_update(state, np.ones(1), np.array([0, 1]), QuadraticModel(1), line_dataset, counter)
    assert (counter.paper, counter.true) == (0, 4)


# ── local full gradients ───────────────────────────────


def test_local_full_grad_is_a_sum(line_dataset):
    counter = SfoCounter()
    total = local_full_grad(WorkerState(0, range(2)), np.array([2.0]), QuadraticModel(1), line_dataset, counter)
    assert_array_equal(total, [4.0])
    assert (counter.paper, counter.true) == (2, 2)


def test_single_sample_shard_is_that_gradient():
    dataset = synthesize(ModelKind.LOGISTIC, 6, 2, seed=0)
    model = LogisticModel(2)
    x = np.array([0.3, -0.6])
    assert_allclose(local_full_grad(WorkerState(0, range(4, 5)), x, model, dataset), model.grad(x, dataset[4]))


def test_shard_sums_average_to_full_gradient():
    dataset = synthesize(ModelKind.LOGISTIC, 23, 3, seed=5)
    model = LogisticModel(3, reg=0.01)
    x = np.array([0.5, 0.1, -0.2])
    shards = [range(0, 8), range(8, 16), range(16, 23)]
    total = sum(local_full_grad(WorkerState(p, r), x, model, dataset) for p, r in enumerate(shards))
    assert_allclose(total / dataset.n, model.full_grad(x, dataset), rtol=1e-12)


# ── statistics ─────────────────────────────────────────


def test_update_is_unbiased_one_step_after_sync():
    dataset = synthesize(ModelKind.LOGISTIC, 100, 4, seed=6)
    model = LogisticModel(4, reg=0.05)
    rng = np.random.default_rng(7)
    x_old = rng.normal(size=4)
    x_new = x_old + rng.normal(scale=0.5, size=4)
    v_old = model.full_grad(x_old, dataset)

    draws = 10_000
    samples = np.empty((draws, 4))
    for i in range(draws):
        state = _synced(range(100), x_old, v_old)
        samples[i] = vr_update(state, x_new, draw_batch(rng, range(100), 5), model, dataset)

    stderr = samples.std(axis=0, ddof=1) / np.sqrt(draws)
    assert np.all(np.abs(samples.mean(axis=0) - model.full_grad(x_new, dataset)) < 4 * stderr)
