"""
Variance-reduced estimator core.

Per-worker state for the path-integrated (SPIDER-type) recursion, the two-point
update a worker performs for each job, the outer synchronization that resets
every worker to the exact full gradient, and the SFO bookkeeping shared by all
simulators.
"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from vrsim.errors import SimulationError
from vrsim.models import Algorithm
from vrsim.services.data import Dataset
from vrsim.services.objective import ObjectiveModel

if TYPE_CHECKING:
    from vrsim.services.engine import AsyncEngine

logger = logging.getLogger(__name__)

NO_ESTIMATE = -1


@dataclass
class SfoCounter:
    """Gradient-evaluation counters.

    ``paper`` follows the complexity count of the analysis (one per sample per
    inner step, N per outer sync); ``true`` is what was actually evaluated.
    """

    paper: int = 0
    true: int = 0

    def charge(self, paper: int = 0, true: int = 0) -> None:
        self.paper += paper
        self.true += true


@dataclass
class Job:
    id: int
    worker_id: int
    parent: int
    k_pull: int
    pull_time: int
    apply_time: int
    span: int
    x_snapshot: np.ndarray = field(repr=False)
    k_apply: int | None = None
    batch: np.ndarray | None = field(default=None, repr=False)


@dataclass
class WorkerState:
    worker_id: int
    shard: range
    x_old: np.ndarray | None = field(default=None, repr=False)
    v_old: np.ndarray | None = field(default=None, repr=False)
    in_flight: Job | None = None
    produced: int = NO_ESTIMATE

    @property
    def initialized(self) -> bool:
        return self.x_old is not None and self.v_old is not None


# ── Estimator operations ───────────────────────────────


def vr_update(
    state: WorkerState,
    x_new: np.ndarray,
    batch: np.ndarray,
    model: ObjectiveModel,
    dataset: Dataset,
    counter: SfoCounter | None = None,
) -> np.ndarray:
    """v_new = (1/|S|) Σ_{i∈S} (∇f(x_new, ξᵢ) − ∇f(x_old, ξᵢ)) + v_old.

    Advances the worker's chain: x_old ← x_new, v_old ← v_new.
    """
    if not state.initialized:
        raise SimulationError(f"worker {state.worker_id} has no estimate yet; an outer sync must come first")
    if len(batch) == 0:
        raise SimulationError(f"worker {state.worker_id} got an empty batch")
    g_new = model.batch_grads(x_new, dataset, batch)
    g_old = model.batch_grads(state.x_old, dataset, batch)
    v_new = (g_new - g_old).sum(axis=0) / len(batch) + state.v_old
    state.x_old = x_new.copy()
    state.v_old = v_new
    if counter is not None:
        counter.charge(true=2 * len(batch))
    return v_new


def outer_sync(state: WorkerState, x_k: np.ndarray, v_k: np.ndarray, token: int = NO_ESTIMATE) -> None:
    """Broadcast (x_k, v_k) to a worker and drop whatever it had in flight."""
    state.x_old = x_k.copy()
    state.v_old = v_k.copy()
    state.in_flight = None
    state.produced = token


def local_full_grad(
    state: WorkerState,
    x_k: np.ndarray,
    model: ObjectiveModel,
    dataset: Dataset,
    counter: SfoCounter | None = None,
) -> np.ndarray:
    """Σ_{i∈shard} ∇f(x_k, ξᵢ). A sum, not a mean."""
    if len(state.shard) == 0:
        raise SimulationError(f"worker {state.worker_id} has an empty shard")
    total = model.batch_grads(x_k, dataset, slice(state.shard.start, state.shard.stop)).sum(axis=0)
    if counter is not None:
        counter.charge(paper=len(state.shard), true=len(state.shard))
    return total


def synchronized_full_grad(engine: AsyncEngine, x: np.ndarray) -> np.ndarray:
    """(1/N) Σ_p G^{(p)} collected from every worker."""
    parts = [local_full_grad(w, x, engine.model, engine.dataset, engine.counter) for w in engine.workers]
    return functools.reduce(np.add, parts) / engine.dataset.n


# ── Update rule ────────────────────────────────────────


class SynthesisRule:
    """Recursive estimator with exact full gradients at every outer sync."""

    algorithm = Algorithm.SYNTHESIS
    paper_factor = 1
    job_factor = 2

    def scope(self, engine: AsyncEngine, worker_id: int) -> range:
        return engine.sampling_scope(worker_id)

    def sync(self, engine: AsyncEngine, k: int, x: np.ndarray) -> np.ndarray:
        v = synchronized_full_grad(engine, x)
        for worker in engine.workers:
            outer_sync(worker, x, v, token=-(k + 2))
        return v

    def apply(self, engine: AsyncEngine, job: Job, batch: np.ndarray) -> np.ndarray:
        state = engine.workers[job.worker_id]
        if job.parent != state.produced:
            raise SimulationError(
                f"worker {job.worker_id}: job {job.id} was built on estimate {job.parent}, "
                f"worker holds {state.produced}",
                iteration=job.k_apply,
            )
        v = vr_update(state, job.x_snapshot, batch, engine.model, engine.dataset, engine.counter)
        state.produced = job.id
        return v
