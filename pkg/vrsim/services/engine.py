"""
Asynchronous optimization engine.

A deterministic discrete-event loop shared by every simulator. Workers pull
a snapshot of the server iterate, their jobs are placed on the scheduler's
clock, and each iteration applies exactly one estimate (or, at an outer
sync, the exact full gradient). What an estimate is comes from the update
rule the engine is given; how it moves the iterate comes from the
architecture: full-vector steps for distributed memory, a single random
coordinate for shared memory.

All randomness flows from one seed split into five named streams, so two
runs with equal configs produce bit-identical traces and runs of different
algorithms share batch and delay draws wherever their structure allows.
"""

from __future__ import annotations

import heapq
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np
import pandas as pd

from vrsim.errors import ConfigError, SimulationError
from vrsim.models import Algorithm, Architecture, Sampling
from vrsim.schemas import AnyRunConfig, ResolvedParams
from vrsim.services.data import Dataset, draw_batch, shard
from vrsim.services.objective import ObjectiveModel, calibrate, make_model
from vrsim.services.scheduler import schedule_delays
from vrsim.services.vr_core import Job, SfoCounter, WorkerState

logger = logging.getLogger(__name__)

STREAM_NAMES = ("batch", "delay", "coordinate", "output", "init")
TRACE_COLUMNS = ["k", "epoch", "loss", "grad_norm_sq", "worker", "tau", "sfo_paper", "sfo_true", "sync"]
MAX_GRID_POINTS = 500


# ── Randomness ─────────────────────────────────────────


@dataclass
class RunStreams:
    batch: np.random.Generator
    delay: np.random.Generator
    coordinate: np.random.Generator
    output: np.random.Generator
    init: np.random.Generator


def make_streams(seed: int) -> RunStreams:
    children = np.random.SeedSequence(seed).spawn(len(STREAM_NAMES))
    return RunStreams(*(np.random.default_rng(child) for child in children))


def draw_coordinate(rng: np.random.Generator, dim: int) -> int:
    return int(rng.integers(0, dim))


def eval_interval(iterations: int, eval_every: int | None = None) -> int:
    return eval_every or max(1, iterations // MAX_GRID_POINTS)


def epoch_of(k: int, q: int) -> int:
    return -(-k // q)


# ── Trace ──────────────────────────────────────────────


@dataclass
class SyncPoint:
    k: int
    x: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)


@dataclass
class InterruptedJob:
    job_id: int
    worker_id: int
    k_pull: int
    elapsed: int
    span: int
    charged: int


class Trace:
    """Everything a run produced: grid records, iterates and the output point."""

    def __init__(self, algorithm: Algorithm, arch: Architecture, params: ResolvedParams, config_hash: str, seed: int):
        self.algorithm = algorithm
        self.arch = arch
        self.params = params
        self.config_hash = config_hash
        self.seed = seed
        self.records: list[dict] = []
        self.iterates: dict[int, np.ndarray] = {}
        self.sync_points: list[SyncPoint] = []
        self.interrupted: list[InterruptedJob] = []
        self.coordinates: list[int] = []
        self.zeta = 0
        self.x_zeta: np.ndarray | None = None
        self.grad_norm_sq_at_zeta = math.nan
        self.final_x: np.ndarray | None = None
        self.final_loss = math.nan
        self.initial_loss = math.nan
        self.sfo_paper = 0
        self.sfo_true = 0
        self.max_tau = 0
        self.max_lag = 0
        self.iterations = 0

    @property
    def frame(self) -> pd.DataFrame:
        return pd.DataFrame.from_records(self.records)

    def columns(self, with_algorithm: bool | None = None) -> list[str]:
        columns = list(TRACE_COLUMNS)
        if self.arch == Architecture.SHARED:
            columns.append("m_k")
        if with_algorithm is None:
            with_algorithm = self.algorithm != Algorithm.SYNTHESIS
        if with_algorithm:
            columns.append("algorithm")
        return columns

    def footer(self) -> str:
        return f"# zeta={self.zeta} grad_norm_sq_at_zeta={self.grad_norm_sq_at_zeta!r} max_tau={self.max_tau}"

    def csv_text(self, with_algorithm: bool | None = None) -> str:
        frame = self.frame.assign(algorithm=self.algorithm.value)
        buffer = io.StringIO()
        frame[self.columns(with_algorithm)].to_csv(buffer, index=False, lineterminator="\n")
        return buffer.getvalue() + self.footer() + "\n"


# ── Update rules ───────────────────────────────────────


class UpdateRule(Protocol):
    algorithm: Algorithm
    paper_factor: int
    job_factor: int

    def scope(self, engine: AsyncEngine, worker_id: int) -> range: ...

    def apply(self, engine: AsyncEngine, job: Job, batch: np.ndarray) -> np.ndarray: ...


@runtime_checkable
class SyncingRule(UpdateRule, Protocol):
    """A rule with an outer loop: every q-th iteration is a sync step."""

    def sync(self, engine: AsyncEngine, k: int, x: np.ndarray) -> np.ndarray: ...


def build_model(config: AnyRunConfig, dataset: Dataset) -> ObjectiveModel:
    """Model of the configured kind, calibrated on ``dataset``."""
    model = make_model(
        config.objective,
        dataset,
        spectrum=config.spectrum,
        reg=config.reg,
        hidden=config.hidden,
        classes=config.classes,
    )
    return calibrate(model, dataset, radius=config.domain_radius, seed=config.seed)


# ── Engine ─────────────────────────────────────────────


class AsyncEngine:
    def __init__(self, config: AnyRunConfig, dataset: Dataset, model: ObjectiveModel, rule: UpdateRule):
        if model.smoothness is None:
            raise ConfigError("model constants must be calibrated before a run")
        self.config = config
        self.dataset = dataset
        self.model = model
        self.rule = rule
        self.synchronizes = isinstance(rule, SyncingRule)
        self.arch = Architecture(config.arch)
        self.params = config.resolve(dataset.n, model.smoothness)
        self.streams = make_streams(config.seed)
        self.counter = SfoCounter()
        self.shards = shard(dataset, config.worker_count)
        self.workers = [WorkerState(p, self.shards[p]) for p in range(config.worker_count)]
        self.scheduler = schedule_delays(self.streams.delay, config.worker_count, config.max_delay, config.delay_mode)
        self.full_step_on_sync = getattr(config, "full_step_on_sync", False)
        self._heap: list[tuple[int, int, int]] = []
        self._jobs: dict[int, Job] = {}
        self._next_job = 0
        smallest = min(len(rule.scope(self, p)) for p in range(config.worker_count))
        if self.params.batch > smallest:
            logger.warning("batch size %d exceeds the smallest sampling scope; capped per job", self.params.batch)
        # batch a sync iteration is charged for when no job is applied
        self.sync_batch = min(self.params.batch, smallest)

    def sampling_scope(self, worker_id: int) -> range:
        """Indices a worker's batches come from: its shard (dm) or the whole dataset."""
        if self.arch == Architecture.DISTRIBUTED and getattr(self.config, "sampling", Sampling.GLOBAL) == Sampling.SHARD:
            return self.shards[worker_id]
        return range(self.dataset.n)

    # ── Jobs ───────────────────────────────────────────

    def _launch(self, worker_id: int, pull_time: int, k_pull: int, x: np.ndarray) -> None:
        apply_time = self.scheduler.place(worker_id, pull_time)
        job = Job(
            id=self._next_job,
            worker_id=worker_id,
            parent=self.workers[worker_id].produced,
            k_pull=k_pull,
            pull_time=pull_time,
            apply_time=apply_time,
            span=self.scheduler.span(pull_time, apply_time),
            x_snapshot=x.copy(),
        )
        self._next_job += 1
        self._jobs[job.id] = job
        self.workers[worker_id].in_flight = job
        heapq.heappush(self._heap, (apply_time, worker_id, job.id))

    def _launch_all(self, pull_time: int, k_pull: int, x: np.ndarray) -> None:
        for worker in self.workers:
            self._launch(worker.worker_id, pull_time, k_pull, x)

    def _interrupt(self, t_sync: int, trace: Trace) -> None:
        """Discard every in-flight job, charging the work already done."""
        for job in sorted(self._jobs.values(), key=lambda j: (j.apply_time, j.worker_id)):
            elapsed = min(max(t_sync - job.pull_time, 0), job.span)
            scope = len(self.rule.scope(self, job.worker_id))
            cost = self.rule.job_factor * min(self.params.batch, scope)
            charged = cost * elapsed // job.span if job.span else 0
            self.counter.charge(true=charged)
            trace.interrupted.append(InterruptedJob(job.id, job.worker_id, job.k_pull, elapsed, job.span, charged))
        if self._jobs:
            logger.debug("sync at t=%d interrupted %d jobs", t_sync, len(self._jobs))
        self._heap.clear()
        self._jobs.clear()
        self.scheduler.reset()
        for worker in self.workers:
            worker.in_flight = None

    # ── Steps ──────────────────────────────────────────

    def _step(self, x: np.ndarray, v: np.ndarray, sync: bool) -> tuple[np.ndarray, int]:
        eta = self.params.eta
        if self.arch == Architecture.DISTRIBUTED or (sync and self.full_step_on_sync):
            return x - eta * v, -1
        m = draw_coordinate(self.streams.coordinate, x.shape[0])
        x_new = x.copy()
        x_new[m] = x[m] - eta * v[m]
        return x_new, m

    def _evaluate(self, x: np.ndarray) -> tuple[float, float]:
        # side channel: not charged to either counter
        grad = self.model.full_grad(x, self.dataset)
        return self.model.full_loss(x, self.dataset), float(grad @ grad)

    # ── Main loop ──────────────────────────────────────

    def run(self) -> Trace:
        config = self.config
        K = config.iterations
        q = self.params.q
        every = eval_interval(K, config.eval_every)
        trace = Trace(self.rule.algorithm, self.arch, self.params, config.config_hash(), config.seed)
        trace.iterations = K

        x = self.model.initial_point(config.x0, self.streams.init)
        trace.zeta = int(self.streams.output.integers(1, K + 1))
        clock = -1
        if not self.synchronizes:
            clock = 0
            self._launch_all(0, 0, x)

        logger.info(
            "%s/%s run %s seed=%d: K=%d q=%d |S|=%d eta=%.4g P=%d delta=%d",
            self.rule.algorithm.value, self.arch.value, trace.config_hash[:12], config.seed,
            K, q, self.params.batch, self.params.eta, config.worker_count, config.max_delay,
        )

        for k in range(K):
            due = k % every == 0
            if due:
                loss, grad_norm_sq = self._evaluate(x)
                trace.iterates[k] = x.copy()
                if k == 0:
                    trace.initial_loss = loss

            is_sync = self.synchronizes and k % q == 0
            if is_sync:
                t_sync = self.scheduler.sync_time(clock)
                self._interrupt(t_sync, trace)
                clock = t_sync
                v = self.rule.sync(self, k, x)
                trace.sync_points.append(SyncPoint(k, x.copy(), v.copy()))
                worker, tau, lag = -1, 0, 0
            else:
                if not self._heap:
                    raise SimulationError("no job available for an inner iteration", iteration=k)
                apply_time, worker, job_id = heapq.heappop(self._heap)
                job = self._jobs.pop(job_id)
                clock = apply_time
                self.scheduler.release(apply_time)
                self.workers[worker].in_flight = None
                job.k_apply = k
                job.batch = draw_batch(self.streams.batch, self.rule.scope(self, worker), self.params.batch)
                v = self.rule.apply(self, job, job.batch)
                tau = self.scheduler.staleness(job)
                lag = k - job.k_pull

            self.counter.charge(paper=self.rule.paper_factor * (self.sync_batch if is_sync else len(job.batch)))
            x_next, m = self._step(x, v, is_sync)
            if not np.all(np.isfinite(x_next)):
                raise SimulationError("iterate became non-finite", iteration=k)

            if is_sync:
                self._launch_all(self.scheduler.pull_time_after(t_sync), k + 1, x_next)
            else:
                self._launch(worker, self.scheduler.pull_time_after(clock), k + 1, x_next)

            trace.max_tau = max(trace.max_tau, tau)
            trace.max_lag = max(trace.max_lag, lag)
            if self.arch == Architecture.SHARED:
                trace.coordinates.append(m)
            if due:
                record = {
                    "k": k,
                    "epoch": epoch_of(k, q),
                    "loss": loss,
                    "grad_norm_sq": grad_norm_sq,
                    "worker": worker,
                    "tau": tau,
                    "lag": lag,
                    "sfo_paper": self.counter.paper,
                    "sfo_true": self.counter.true,
                    "sync": int(is_sync),
                }
                if self.arch == Architecture.SHARED:
                    record["m_k"] = m
                trace.records.append(record)
            if k == trace.zeta - 1:
                trace.x_zeta = x_next.copy()
            x = x_next

        trace.final_x = x
        trace.iterates[K] = x.copy()
        trace.final_loss = self.model.full_loss(x, self.dataset)
        zeta_grad = self.model.full_grad(trace.x_zeta, self.dataset)
        trace.grad_norm_sq_at_zeta = float(zeta_grad @ zeta_grad)
        trace.sfo_paper = self.counter.paper
        trace.sfo_true = self.counter.true
        logger.info(
            "run %s seed=%d done: loss=%.6g sfo_paper=%d max_tau=%d interrupted=%d",
            trace.config_hash[:12], config.seed, trace.final_loss, trace.sfo_paper, trace.max_tau,
            len(trace.interrupted),
        )
        return trace
