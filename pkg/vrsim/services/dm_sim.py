"""Distributed-memory SYNTHESIS: P workers on contiguous shards, one parameter server."""

import logging
import math

from vrsim.errors import ConfigError
from vrsim.models import Architecture
from vrsim.schemas import RunConfig
from vrsim.services.data import Dataset
from vrsim.services.engine import AsyncEngine, Trace, build_model
from vrsim.services.objective import ObjectiveModel
from vrsim.services.vr_core import SynthesisRule

logger = logging.getLogger(__name__)


def check_worker_count(workers: int, n_samples: int) -> None:
    if workers > math.sqrt(n_samples):
        logger.warning("P=%d exceeds sqrt(N)=%.1f; the convergence bound does not cover this run", workers, math.sqrt(n_samples))


def run_synthesis_dm(config: RunConfig, dataset: Dataset, model: ObjectiveModel | None = None) -> Trace:
    """Run K iterations of SYNTHESIS with exact shard-summed full gradients every q iterations."""
    if config.arch != Architecture.DISTRIBUTED.value:
        raise ConfigError(f"run_synthesis_dm needs a distributed-memory config, got arch={config.arch}")
    check_worker_count(config.workers, dataset.n)
    model = model or build_model(config, dataset)
    return AsyncEngine(config, dataset, model, SynthesisRule()).run()
