from __future__ import annotations

import logging

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from vrsim.errors import ConfigError, SimulationError
from vrsim.services import analysis
from vrsim.services.data import draw_batch
from vrsim.services.dm_sim import run_synthesis_dm
from vrsim.services.engine import build_model, epoch_of, make_streams
from vrsim.services.experiments import dataset_for
from vrsim.services.sm_sim import run_synthesis_sm


def serial_spiderboost(model, dataset, *, K, q, batch, eta, seed):
    """Synchronous SpiderBoost: full gradient every q steps, recursive estimate in between."""
    streams = make_streams(seed)
    x = np.zeros(model.dim)
    iterates = [x]
    x_prev = v = None
    for k in range(K):
        if k % q == 0:
            v = model.full_grad(x, dataset)
        else:
            idx = draw_batch(streams.batch, range(dataset.n), batch)
            diff = model.batch_grads(x, dataset, idx) - model.batch_grads(x_prev, dataset, idx)
            v = diff.sum(axis=0) / len(idx) + v
        x_prev = x
        x = x - eta * v
        iterates.append(x)
    return iterates


@pytest.mark.parametrize(
    "fields",
    [
        {"model": "quadratic", "N": 100, "d": 6, "spectrum": [1.0, 2.0, 0.5, 3.0, 1.5, 0.25]},
        {"model": "logistic", "N": 100, "d": 5, "reg": 0.01},
    ],
    ids=["quadratic", "logistic"],
)
def test_matches_serial_spiderboost_bit_for_bit(run_config, fields):
    config = run_config(P=1, delta=0, K=2000, seed=3, eval_every=1, **fields)
    dataset = dataset_for(config)
    model = build_model(config, dataset)
    trace = run_synthesis_dm(config, dataset, model)
    p = trace.params
    reference = serial_spiderboost(model, dataset, K=2000, q=p.q, batch=p.batch, eta=p.eta, seed=3)
    for k, x in enumerate(reference):
        assert_array_equal(trace.iterates[k], x)


def test_sfo_example(run_config):
    config = run_config(N=25, d=3, q=5, batch=5, K=10)
    trace = run_synthesis_dm(config, dataset_for(config))
    assert trace.sfo_paper == 100


def test_sfo_matches_formula_on_random_tuples(run_config):
    rng = np.random.default_rng(2024)
    for _ in range(10):
        N = int(rng.integers(4, 60))
        K, q, batch = int(rng.integers(1, 80)), int(rng.integers(1, 20)), int(rng.integers(1, N + 1))
        config = run_config(N=N, d=2, K=K, q=q, batch=batch, eta=0.1)
        trace = run_synthesis_dm(config, dataset_for(config))
        assert trace.sfo_paper == analysis.sfo_paper(K, q, N, batch)


def test_sfo_counts_the_capped_batch(run_config):
    config = run_config(N=20, d=2, P=4, delta=3, q=5, batch=10, K=10, sampling="shard")
    trace = run_synthesis_dm(config, dataset_for(config))
    assert trace.sfo_paper == 10 * 5 + 2 * 20
    assert trace.sfo_paper < analysis.sfo_paper(10, 5, 20, 10)


def test_runs_are_bit_reproducible(run_config):
    config = run_config(model="logistic", N=90, d=4, P=3, delta=3, K=300, seed=17)
    dataset = dataset_for(config)
    first, second = run_synthesis_dm(config, dataset), run_synthesis_dm(config, dataset)
    assert first.csv_text() == second.csv_text()
    assert_array_equal(first.final_x, second.final_x)
    assert (first.zeta, first.sfo_true) == (second.zeta, second.sfo_true)


def test_one_gradient_per_iteration(run_config):
    config = run_config(N=90, P=3, delta=2, K=120, q=10, eval_every=1)
    trace = run_synthesis_dm(config, dataset_for(config))
    frame = trace.frame
    assert len(frame) == 120
    assert (frame.loc[frame["sync"] == 1, "worker"] == -1).all()
    assert frame.loc[frame["sync"] == 0, "worker"].between(0, 2).all()
    assert list(frame.loc[frame["sync"] == 1, "k"]) == list(range(0, 120, 10))
    assert list(frame["epoch"]) == [epoch_of(k, 10) for k in range(120)]


@pytest.mark.parametrize("arch", ["dm", "sm"])
def test_outer_sync_gradient_is_exact(run_config, arch):
    for seed in range(20):
        config = run_config(arch=arch, model="logistic", N=64, d=4, P=2, delta=2, K=120, seed=seed)
        dataset = dataset_for(config)
        model = build_model(config, dataset)
        run = run_synthesis_sm if arch == "sm" else run_synthesis_dm
        trace = run(config, dataset, model)
        assert len(trace.sync_points) == -(-120 // trace.params.q)
        for point in trace.sync_points:
            exact = model.full_grad(point.x, dataset)
            assert np.linalg.norm(point.v - exact) <= 1e-10 * (1 + np.linalg.norm(exact))


def test_no_job_survives_an_outer_sync(run_config):
    q = 8
    config = run_config(N=90, P=3, delta=4, K=200, q=q, eval_every=1)
    trace = run_synthesis_dm(config, dataset_for(config))
    for row in trace.records:
        if not row["sync"]:
            last_sync = (row["k"] // q) * q
            assert row["k"] - row["lag"] > last_sync
    assert trace.interrupted
    for job in trace.interrupted:
        assert 0 <= job.elapsed <= job.span
        next_sync = -(-job.k_pull // q) * q
        assert job.k_pull <= next_sync < 200


def test_true_evaluations_add_up(run_config):
    K, q = 150, 10
    config = run_config(N=96, d=3, P=3, delta=3, K=K, q=q)
    trace = run_synthesis_dm(config, dataset_for(config))
    syncs = -(-K // q)
    batch = trace.params.batch
    charged = sum(job.charged for job in trace.interrupted)
    assert trace.sfo_true == syncs * 96 + 2 * batch * (K - syncs) + charged
    assert all(job.charged <= 2 * batch for job in trace.interrupted)


def test_non_finite_iterate_names_the_iteration(run_config):
    config = run_config(eta=1e300, K=50)
    with pytest.raises(SimulationError, match=r"iteration \d+") as excinfo:
        run_synthesis_dm(config, dataset_for(config))
    assert excinfo.value.iteration is not None


def test_too_many_workers_for_the_theorem_is_warned(run_config, caplog):
    config = run_config(N=16, P=5, delta=4, K=20)
    with caplog.at_level(logging.WARNING, logger="vrsim.services.dm_sim"):
        run_synthesis_dm(config, dataset_for(config))
    assert "exceeds sqrt(N)" in caplog.text


def test_shared_memory_config_is_rejected(run_config):
    config = run_config(arch="sm")
    with pytest.raises(ConfigError):
        run_synthesis_dm(config, dataset_for(config))


def test_zeta_and_output_point(run_config):
    config = run_config(K=200, seed=4)
    dataset = dataset_for(config)
    model = build_model(config, dataset)
    trace = run_synthesis_dm(config, dataset, model)
    assert 1 <= trace.zeta <= 200
    grad = model.full_grad(trace.x_zeta, dataset)
    assert trace.grad_norm_sq_at_zeta == float(grad @ grad)
    assert trace.csv_text().rstrip().endswith(f"max_tau={trace.max_tau}")


def test_epoch_averaged_loss_descends(run_config):
    descending = 0
    for seed in range(20):
        config = run_config(N=100, d=4, spectrum=[1.0, 0.5, 0.25, 0.1], P=2, delta=2, K=300, seed=seed, eval_every=1)
        frame = run_synthesis_dm(config, dataset_for(config)).frame
        means = frame.groupby("epoch")["loss"].mean().to_numpy()
        slack = 1e-12 * (1 + np.abs(means[1:]))
        descending += bool(np.all(np.diff(means) <= slack))
    assert descending >= 19
