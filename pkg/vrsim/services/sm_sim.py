"""
Shared-memory SYNTHESIS.

T threads draw batches from the whole dataset and every iteration, the
outer sync included, moves one uniformly chosen coordinate.
"""

from vrsim.errors import ConfigError
from vrsim.models import Architecture
from vrsim.schemas import SharedRunConfig
from vrsim.services.data import Dataset
from vrsim.services.engine import AsyncEngine, Trace, build_model
from vrsim.services.objective import ObjectiveModel
from vrsim.services.vr_core import SynthesisRule


def run_synthesis_sm(config: SharedRunConfig, dataset: Dataset, model: ObjectiveModel | None = None) -> Trace:
    if config.arch != Architecture.SHARED.value:
        raise ConfigError(f"run_synthesis_sm needs a shared-memory config, got arch={config.arch}")
    model = model or build_model(config, dataset)
    return AsyncEngine(config, dataset, model, SynthesisRule()).run()
