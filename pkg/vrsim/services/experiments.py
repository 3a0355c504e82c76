"""
Experiment orchestration.

Single runs, cross-product sweeps executed in a process pool, and
same-seed comparisons of all three algorithms. Every run writes a trace CSV
and a summary JSON named from its config hash and seed, and is recorded in
the run ledger.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import pandas as pd

from vrsim.config import settings
from vrsim.errors import ConfigError
from vrsim.models import Algorithm, Architecture
from vrsim.schemas import SEED_LIMIT, AnyRunConfig, CsvSchema, ExperimentSpec, RunSummary
from vrsim.services import analysis
from vrsim.services.baselines import run_async_sgd, run_async_svrg
from vrsim.services.data import Dataset, load_csv, synthesize
from vrsim.services.dm_sim import run_synthesis_dm
from vrsim.services.engine import Trace, build_model
from vrsim.services.ledger import RunLedger, digest, output_stem, write_output
from vrsim.services.objective import ObjectiveModel
from vrsim.services.sm_sim import run_synthesis_sm

logger = logging.getLogger(__name__)


@dataclass
class RunOutcome:
    summary: RunSummary
    trace_path: Path
    summary_path: Path
    digest: str


# ── Building blocks ────────────────────────────────────


def dataset_for(config: AnyRunConfig) -> Dataset:
    """The dataset a config describes: its CSV file, else a synthetic draw seeded by the run seed."""
    if config.csv_path:
        return load_csv(config.csv_path, CsvSchema(label_column=config.csv_label, positive_label=config.csv_positive))
    return synthesize(
        config.objective,
        config.n_samples,
        config.dim,
        config.seed,
        symmetric=config.symmetric,
        label_noise=config.label_noise,
    )


def simulate(
    config: AnyRunConfig,
    dataset: Dataset,
    model: ObjectiveModel | None = None,
    algorithm: Algorithm | None = None,
) -> Trace:
    """Dispatch to the simulator for ``algorithm`` (default: the config's) and architecture."""
    algorithm = Algorithm(algorithm or config.algorithm)
    if algorithm == Algorithm.ASYNC_SGD:
        return run_async_sgd(config, dataset, model)
    if algorithm == Algorithm.ASYNC_SVRG:
        return run_async_svrg(config, dataset, model)
    if config.arch == Architecture.SHARED.value:
        return run_synthesis_sm(config, dataset, model)
    return run_synthesis_dm(config, dataset, model)


def summarize(config: AnyRunConfig, trace: Trace, dataset: Dataset, model: ObjectiveModel) -> RunSummary:
    arch = Architecture(config.arch)
    gap, gap_approximate = analysis.f_gap(config, dataset, model)
    inputs = analysis.theory_inputs(config, dataset, model, gap)
    bound, kind = analysis.predicted_bound(inputs, arch) if trace.algorithm == Algorithm.SYNTHESIS else (None, None)
    return RunSummary(
        algorithm=trace.algorithm,
        arch=arch.value,
        config_hash=trace.config_hash,
        seed=config.seed,
        iterations=config.iterations,
        q=trace.params.q,
        batch=trace.params.batch,
        eta=trace.params.eta,
        workers=config.worker_count,
        max_delay=config.max_delay,
        delay_mode=config.delay_mode,
        final_loss=trace.final_loss,
        grad_norm_sq_at_zeta=trace.grad_norm_sq_at_zeta,
        zeta=trace.zeta,
        sfo_paper=trace.sfo_paper,
        sfo_true=trace.sfo_true,
        max_tau=trace.max_tau,
        interrupted_jobs=len(trace.interrupted),
        beta1=analysis.beta1(inputs, arch),
        predicted_bound=bound,
        predicted_bound_kind=kind,
        within_predicted=None if bound is None else trace.grad_norm_sq_at_zeta <= bound,
        f_gap=gap,
        f_gap_approximate=gap_approximate,
        constants_approximate=model.approximate_constants,
    )


def _write_run(
    config: AnyRunConfig,
    trace: Trace,
    summary: RunSummary,
    out_dir: Path,
    force: bool,
    with_algorithm: bool | None = None,
) -> RunOutcome:
    stem = output_stem(trace.algorithm.value, config.arch, trace.config_hash, config.seed)
    trace_path = Path(out_dir) / f"{stem}.csv"
    summary_path = Path(out_dir) / f"{stem}.json"
    text = trace.csv_text(with_algorithm)
    write_output(trace_path, text, force)
    write_output(summary_path, summary.model_dump_json(indent=2) + "\n", force)
    return RunOutcome(summary, trace_path, summary_path, digest(text))


def _record(ledger: RunLedger, outcome: RunOutcome) -> None:
    summary = outcome.summary
    ledger.record(
        config_hash=summary.config_hash,
        seed=summary.seed,
        algorithm=summary.algorithm.value,
        arch=summary.arch,
        trace_path=outcome.trace_path,
        summary_path=outcome.summary_path,
        content_digest=outcome.digest,
    )


def out_dir_for(config: AnyRunConfig, out: str | Path | None) -> Path:
    return Path(out or config.output or "runs")


# ── Single run ─────────────────────────────────────────


def execute_run(config: AnyRunConfig, out_dir: Path, force: bool = False, record: bool = True) -> RunOutcome:
    dataset = dataset_for(config)
    model = build_model(config, dataset)
    trace = simulate(config, dataset, model)
    summary = summarize(config, trace, dataset, model)
    outcome = _write_run(config, trace, summary, out_dir, force)
    if record:
        _record(RunLedger(out_dir), outcome)
    logger.info("Wrote %s and %s", outcome.trace_path, outcome.summary_path)
    return outcome


# ── Sweep ──────────────────────────────────────────────


def _sweep_member(args: tuple[AnyRunConfig, Path, bool]) -> RunOutcome:
    config, out_dir, force = args
    return execute_run(config, out_dir, force, record=False)


def sweep(spec: ExperimentSpec, force: bool = False) -> tuple[pd.DataFrame, Path]:
    """Run every member of the cross product; write the aggregate CSV after all have finished."""
    configs = spec.expand(settings.max_runs)
    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = max(1, min(settings.threads, len(configs)))
    logger.info("Sweep of %d runs on %d processes into %s", len(configs), workers, out_dir)

    jobs = [(config, out_dir, force) for config in configs]
    if workers == 1:
        outcomes = [_sweep_member(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_sweep_member, jobs))

    ledger = RunLedger(out_dir)
    rows = []
    for config, outcome in zip(configs, outcomes):
        _record(ledger, outcome)
        s = outcome.summary
        rows.append(
            {
                "algorithm": s.algorithm.value,
                "arch": s.arch,
                "delta": s.max_delay,
                "N": config.n_samples,
                "eta": s.eta,
                "seed": s.seed,
                "final_loss": s.final_loss,
                "grad_norm_sq_at_zeta": s.grad_norm_sq_at_zeta,
                "sfo_paper": s.sfo_paper,
                "sfo_true": s.sfo_true,
                "max_tau": s.max_tau,
                "trace": outcome.trace_path.name,
            }
        )
    aggregate = pd.DataFrame(rows).sort_values(["algorithm", "N", "eta", "delta", "seed"], kind="stable")
    path = out_dir / f"sweep-{spec.base.config_hash()[:12]}.csv"
    write_output(path, aggregate.to_csv(index=False, lineterminator="\n"), force)
    return aggregate, path


# ── Compare ────────────────────────────────────────────


def sfo_to_reach(trace: Trace, target: float) -> int | None:
    """Analysis SFO count at the first grid point whose loss is at or below ``target``."""
    frame = trace.frame
    hits = frame[frame["loss"] <= target]
    if hits.empty:
        return trace.sfo_paper if trace.final_loss <= target else None
    return int(hits["sfo_paper"].iloc[0])


def compare(
    config: AnyRunConfig,
    algorithms: list[Algorithm],
    out_dir: Path,
    force: bool = False,
    target: float | None = None,
) -> tuple[pd.DataFrame, Path]:
    """All algorithms on one dataset, seed and model; traces carry an algorithm column."""
    if not algorithms:
        raise ConfigError("compare needs at least one algorithm")
    dataset = dataset_for(config)
    model = build_model(config, dataset)
    ledger = RunLedger(out_dir)

    traces = {}
    for algorithm in algorithms:
        trace = simulate(config, dataset, model, algorithm)
        summary = summarize(config, trace, dataset, model)
        _record(ledger, _write_run(config, trace, summary, out_dir, force, with_algorithm=True))
        traces[algorithm] = trace

    if target is None:
        target = max(t.final_loss for t in traces.values())
    rows = [
        {
            "algorithm": algorithm.value,
            "arch": config.arch,
            "final_loss": trace.final_loss,
            "grad_norm_sq_at_zeta": trace.grad_norm_sq_at_zeta,
            "sfo_paper": trace.sfo_paper,
            "sfo_true": trace.sfo_true,
            "target_loss": target,
            "sfo_to_target": sfo_to_reach(trace, target),
        }
        for algorithm, trace in traces.items()
    ]
    table = pd.DataFrame(rows)
    path = Path(out_dir) / f"compare-{config.arch}-{config.config_hash()[:12]}-seed{config.seed}.csv"
    write_output(path, table.to_csv(index=False, lineterminator="\n"), force)
    return table, path


def seed_list(count: int | None, explicit: list[int] | None, base_seed: int) -> list[int]:
    if explicit:
        return explicit
    if count:
        return [(base_seed + i) % SEED_LIMIT for i in range(count)]
    return []
