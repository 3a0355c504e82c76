"""
Baseline algorithms.

Async-SGD (single loop, plain mini-batch gradients at the stale iterate) and
Async-SVRG (anchored control variate refreshed every q iterations) on the same
engine, delay scheduler and random streams as SYNTHESIS, under either
architecture.
"""

import numpy as np

from vrsim.models import Algorithm
from vrsim.schemas import AnyRunConfig
from vrsim.services.data import Dataset
from vrsim.services.engine import AsyncEngine, Trace, build_model
from vrsim.services.objective import ObjectiveModel
from vrsim.services.vr_core import Job, synchronized_full_grad


class SgdRule:
    algorithm = Algorithm.ASYNC_SGD
    paper_factor = 1
    job_factor = 1

    def scope(self, engine: AsyncEngine, worker_id: int) -> range:
        return engine.sampling_scope(worker_id)

    def apply(self, engine: AsyncEngine, job: Job, batch: np.ndarray) -> np.ndarray:
        grads = engine.model.batch_grads(job.x_snapshot, engine.dataset, batch)
        engine.counter.charge(true=len(batch))
        return grads.sum(axis=0) / len(batch)


class SvrgRule:
    """v = (1/|S|) Σ (∇f(x_pull, ξᵢ) − ∇f(x̃, ξᵢ)) + ∇f(x̃), anchor x̃ reset at every sync."""

    algorithm = Algorithm.ASYNC_SVRG
    paper_factor = 2
    job_factor = 2

    def __init__(self):
        self.anchor: np.ndarray | None = None
        self.anchor_grad: np.ndarray | None = None

    def scope(self, engine: AsyncEngine, worker_id: int) -> range:
        # global sampling in both architectures
        return range(engine.dataset.n)

    def sync(self, engine: AsyncEngine, k: int, x: np.ndarray) -> np.ndarray:
        self.anchor = x.copy()
        self.anchor_grad = synchronized_full_grad(engine, x)
        return self.anchor_grad

    def apply(self, engine: AsyncEngine, job: Job, batch: np.ndarray) -> np.ndarray:
        g_new = engine.model.batch_grads(job.x_snapshot, engine.dataset, batch)
        g_anchor = engine.model.batch_grads(self.anchor, engine.dataset, batch)
        engine.counter.charge(true=2 * len(batch))
        return (g_new - g_anchor).sum(axis=0) / len(batch) + self.anchor_grad


def run_async_sgd(config: AnyRunConfig, dataset: Dataset, model: ObjectiveModel | None = None) -> Trace:
    model = model or build_model(config, dataset)
    return AsyncEngine(config, dataset, model, SgdRule()).run()


def run_async_svrg(config: AnyRunConfig, dataset: Dataset, model: ObjectiveModel | None = None) -> Trace:
    model = model or build_model(config, dataset)
    return AsyncEngine(config, dataset, model, SvrgRule()).run()
