"""
Algorithmic stability harness.

Runs an algorithm on S and on an adjacent S′ (last sample replaced) with the
same seed, so batch indices, delays, coordinates and ζ coincide, and measures
how far the two iterate sequences drift apart against the uniform-stability
bounds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import pandas as pd

from vrsim.errors import ConfigError
from vrsim.models import Algorithm, Architecture
from vrsim.schemas import AnyRunConfig, StabilityReport
from vrsim.services import analysis
from vrsim.services.data import Dataset, make_adjacent, probe_set
from vrsim.services.engine import Trace, build_model
from vrsim.services.experiments import dataset_for, simulate
from vrsim.services.objective import ObjectiveModel

logger = logging.getLogger(__name__)

SERIES_COLUMNS = ["k", "delta_norm", "norm_delta_norm"]
TABLE_COLUMNS = [
    "algorithm", "arch", "eta", "N", "K", "delta",
    "mean_delta_norm", "stderr", "norm_delta_norm", "bound", "within_bound",
]


@dataclass
class CoupledRun:
    report: StabilityReport
    series: pd.DataFrame
    trace: Trace
    trace_prime: Trace


def normalized(delta_norm: float, x: np.ndarray) -> float:
    return delta_norm / max(1.0, float(np.linalg.norm(x)))


def delta_series(trace: Trace, trace_prime: Trace) -> pd.DataFrame:
    """‖x_k − x′_k‖ on the shared evaluation grid, final iterate included."""
    rows = []
    for k in sorted(trace.iterates):
        x, x_prime = trace.iterates[k], trace_prime.iterates[k]
        norm = float(np.linalg.norm(x - x_prime))
        rows.append({"k": k, "delta_norm": norm, "norm_delta_norm": normalized(norm, x)})
    return pd.DataFrame(rows, columns=SERIES_COLUMNS)


def step_perturbation(
    trace: Trace, trace_prime: Trace, model: ObjectiveModel, S: Dataset, S_prime: Dataset
) -> float:
    """max_k (η/N)‖∇f(x_k, ξ_N) − ∇f(x′_k, ξ′_N)‖ over the grid."""
    last = S.n - 1
    scale = trace.params.eta / S.n
    worst = 0.0
    for k in trace.iterates:
        g = model.grad(trace.iterates[k], S[last])
        g_prime = model.grad(trace_prime.iterates[k], S_prime[last])
        worst = max(worst, scale * float(np.linalg.norm(g - g_prime)))
    return worst


def coupled_pair(
    algorithm: Algorithm,
    config: AnyRunConfig,
    S: Dataset,
    *,
    model: ObjectiveModel | None = None,
    coupled: bool = True,
) -> CoupledRun:
    """Both runs, their δ series and the report. ``coupled=False`` runs S against itself."""
    if S.n < 2:
        raise ConfigError("stability runs need N >= 2")
    algorithm = Algorithm(algorithm)
    model = model or build_model(config, S)
    S_prime = make_adjacent(S, seed=config.seed) if coupled else S

    trace = simulate(config, S, model, algorithm)
    trace_prime = simulate(config, S_prime, model, algorithm)
    series = delta_series(trace, trace_prime)

    arch = Architecture(config.arch)
    convexity = analysis.convexity_of(model.kind, model.strong_convexity)
    args = (arch, convexity, trace.params.eta, model.lipschitz, config.iterations, S.n, model.dim)
    loss_bound = analysis.stability_bound(*args)
    statement = analysis.stability_bound_statement_form(*args)

    delta_norm = float(series["delta_norm"].iloc[-1])
    probes = probe_set(S, seed=config.seed)
    probe_gap = float(
        np.abs(
            model.batch_losses(trace.final_x, probes, slice(0, probes.n))
            - model.batch_losses(trace_prime.final_x, probes, slice(0, probes.n))
        ).max()
    )
    bound = loss_bound / model.lipschitz
    report = StabilityReport(
        algorithm=algorithm,
        arch=arch.value,
        eta=trace.params.eta,
        n_samples=S.n,
        iterations=config.iterations,
        dim=model.dim,
        max_delay=config.max_delay,
        seed=config.seed,
        delta_norm=delta_norm,
        norm_delta_norm=float(series["norm_delta_norm"].iloc[-1]),
        loss_proxy=model.lipschitz * delta_norm,
        probe_loss_gap=probe_gap,
        step_perturbation_max=step_perturbation(trace, trace_prime, model, S, S_prime),
        convexity=convexity.value,
        bound=bound,
        loss_bound=loss_bound,
        statement_bound=statement if statement != loss_bound else None,
        within_bound=delta_norm <= bound,
        coupled=coupled,
    )
    logger.info(
        "%s/%s seed=%d: |delta_K|=%.4g bound=%.4g", algorithm.value, arch.value, config.seed, delta_norm, bound
    )
    return CoupledRun(report, series, trace, trace_prime)


def coupled_run(
    algorithm: Algorithm,
    config: AnyRunConfig,
    S: Dataset,
    *,
    model: ObjectiveModel | None = None,
    coupled: bool = True,
) -> StabilityReport:
    return coupled_pair(algorithm, config, S, model=model, coupled=coupled).report


def stability_reports(
    configs: list[AnyRunConfig],
    algorithms: list[Algorithm],
    seeds: list[int],
    on_pair: Callable[[AnyRunConfig, CoupledRun], None] | None = None,
) -> list[tuple[int, StabilityReport]]:
    """(config index, report) for every config × algorithm × seed; each seed draws a fresh dataset."""
    if not configs:
        raise ConfigError("stability table needs at least one config")
    if not algorithms:
        raise ConfigError("stability table needs at least one algorithm")
    results = []
    for index, base in enumerate(configs):
        for seed in seeds or [base.seed]:
            config = base.model_copy(update={"seed": seed})
            S = dataset_for(config)
            model = build_model(config, S)
            for algorithm in algorithms:
                pair = coupled_pair(algorithm, config, S, model=model)
                if on_pair is not None:
                    on_pair(config, pair)
                results.append((index, pair.report))
    return results


def stability_table(
    configs: list[AnyRunConfig],
    algorithms: list[Algorithm],
    seeds: list[int] | None = None,
    on_pair: Callable[[AnyRunConfig, CoupledRun], None] | None = None,
) -> pd.DataFrame:
    """One row per (config, algorithm): mean and standard error of ‖δ_K‖ over the seeds."""
    results = stability_reports(configs, algorithms, seeds or [], on_pair)
    frame = pd.DataFrame(
        [{"config": index, **report.model_dump(mode="json")} for index, report in results]
    )
    grouped = frame.groupby(["config", "algorithm", "arch"], sort=False)
    table = grouped.agg(
        eta=("eta", "mean"),
        N=("n_samples", "first"),
        K=("iterations", "first"),
        delta=("max_delay", "first"),
        mean_delta_norm=("delta_norm", "mean"),
        stderr=("delta_norm", "sem"),
        norm_delta_norm=("norm_delta_norm", "mean"),
        bound=("bound", "mean"),
        within_bound=("within_bound", "all"),
    ).reset_index()
    table["stderr"] = table["stderr"].fillna(0.0)
    return table[TABLE_COLUMNS]
