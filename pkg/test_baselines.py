from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from vrsim.models import Algorithm
from vrsim.services import analysis
from vrsim.services.baselines import SgdRule, SvrgRule, run_async_sgd, run_async_svrg
from vrsim.services.data import draw_batch
from vrsim.services.dm_sim import run_synthesis_dm
from vrsim.services.engine import AsyncEngine, SyncingRule, build_model, make_streams
from vrsim.services.experiments import dataset_for
from vrsim.services.vr_core import NO_ESTIMATE, Job, SynthesisRule


def serial_svrg(model, dataset, *, K, q, batch, eta, seed):
    """Synchronous SVRG with the anchor refreshed every q steps."""
    streams = make_streams(seed)
    x = np.zeros(model.dim)
    iterates = [x]
    anchor = anchor_grad = None
    for k in range(K):
        if k % q == 0:
            anchor, anchor_grad = x, model.full_grad(x, dataset)
            v = anchor_grad
        else:
            idx = draw_batch(streams.batch, range(dataset.n), batch)
            diff = model.batch_grads(x, dataset, idx) - model.batch_grads(anchor, dataset, idx)
            v = diff.sum(axis=0) / len(idx) + anchor_grad
        x = x - eta * v
        iterates.append(x)
    return iterates


def test_matches_serial_svrg_bit_for_bit(run_config):
    config = run_config(model="logistic", N=100, d=5, reg=0.01, K=2000, seed=8, eval_every=1)
    dataset = dataset_for(config)
    model = build_model(config, dataset)
    trace = run_async_svrg(config, dataset, model)
    p = trace.params
    reference = serial_svrg(model, dataset, K=2000, q=p.q, batch=p.batch, eta=p.eta, seed=8)
    for k, x in enumerate(reference):
        assert_array_equal(trace.iterates[k], x)
    assert trace.algorithm == Algorithm.ASYNC_SVRG


def test_svrg_sfo_charges_both_points(run_config):
    config = run_config(N=25, d=3, q=5, batch=5, K=10)
    trace = run_async_svrg(config, dataset_for(config))
    assert trace.sfo_paper == analysis.sfo_paper(10, 5, 25, 10) == 150


def test_sgd_sfo_is_iterations_times_batch(run_config):
    config = run_config(N=50, batch=10, K=100)
    trace = run_async_sgd(config, dataset_for(config))
    assert trace.sfo_paper == 1000
    assert trace.sfo_true == 1000
    assert not trace.sync_points


def test_only_rules_with_an_outer_loop_synchronize(run_config):
    config = run_config(N=40, d=3)
    dataset = dataset_for(config)
    model = build_model(config, dataset)
    assert not isinstance(SgdRule(), SyncingRule)
    assert isinstance(SvrgRule(), SyncingRule) and isinstance(SynthesisRule(), SyncingRule)
    assert not AsyncEngine(config, dataset, model, SgdRule()).synchronizes
    assert AsyncEngine(config, dataset, model, SynthesisRule()).synchronizes


def test_full_batch_sgd_is_gradient_descent(run_config):
    config = run_config(N=50, d=5, batch=50, eta=0.1, K=30, eval_every=1)
    dataset = dataset_for(config)
    model = build_model(config, dataset)
    trace = run_async_sgd(config, dataset, model)
    x = np.zeros(5)
    for k in range(30):
        assert_allclose(trace.iterates[k], x, rtol=1e-12, atol=1e-15)
        x = x - 0.1 * model.full_grad(x, dataset)
    assert np.all(np.diff(trace.frame["loss"].to_numpy()) < 0)


def test_baselines_are_deterministic(run_config):
    config = run_config(model="logistic", N=80, d=4, P=2, delta=3, K=200, seed=5)
    dataset = dataset_for(config)
    for run in (run_async_sgd, run_async_svrg):
        assert run(config, dataset).csv_text() == run(config, dataset).csv_text()


def test_baseline_traces_carry_the_algorithm(run_config):
    config = run_config(K=20)
    trace = run_async_sgd(config, dataset_for(config))
    header = trace.csv_text().splitlines()[0].split(",")
    assert header[-1] == "algorithm"
    assert "async-sgd" in trace.csv_text().splitlines()[1]


def test_baselines_share_delay_draws_with_synthesis(run_config):
    config = run_config(N=81, P=3, delta=4, K=150, q=10, eval_every=1)
    dataset = dataset_for(config)
    synthesis = run_synthesis_dm(config, dataset).frame
    svrg = run_async_svrg(config, dataset).frame
    assert_array_equal(synthesis["worker"], svrg["worker"])
    assert_array_equal(synthesis["tau"], svrg["tau"])


def _engine(run_config, **fields):
    config = run_config(**fields)
    dataset = dataset_for(config)
    return AsyncEngine(config, dataset, build_model(config, dataset), SvrgRule())


def test_svrg_estimate_at_the_anchor_is_the_anchor_gradient(run_config):
    engine = _engine(run_config, model="logistic", N=40, d=3)
    rule = engine.rule
    x = np.array([0.2, -0.3, 0.1])
    anchor_grad = rule.sync(engine, 0, x)
    job = Job(0, 0, NO_ESTIMATE, 1, 1, 1, 1, x.copy())
    assert_array_equal(rule.apply(engine, job, np.array([2, 9, 30])), anchor_grad)


def test_svrg_estimate_is_unbiased_for_the_stale_point(run_config):
    engine = _engine(run_config, model="logistic", N=100, d=4, reg=0.05)
    rule = engine.rule
    rng = np.random.default_rng(1)
    anchor = rng.normal(size=4)
    stale = anchor + rng.normal(scale=0.5, size=4)
    rule.sync(engine, 0, anchor)

    draws = 10_000
    samples = np.empty((draws, 4))
    job = Job(0, 0, NO_ESTIMATE, 1, 1, 1, 1, stale)
    for i in range(draws):
        samples[i] = rule.apply(engine, job, draw_batch(rng, range(100), 5))

    exact = engine.model.full_grad(stale, engine.dataset)
    stderr = samples.std(axis=0, ddof=1) / np.sqrt(draws)
    assert np.all(np.abs(samples.mean(axis=0) - exact) < 4 * stderr)


@pytest.mark.parametrize("run", [run_async_sgd, run_async_svrg])
def test_baselines_run_under_shared_memory(run_config, run):
    config = run_config(arch="sm", N=64, d=5, P=2, delta=2, K=200, eval_every=1)
    trace = run(config, dataset_for(config))
    assert len(trace.coordinates) == 200
    for k in range(200):
        assert np.count_nonzero(trace.iterates[k + 1] != trace.iterates[k]) <= 1
