"""Pydantic schemas for run configuration, theory inputs and reports."""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from typing import ClassVar, Literal

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, model_validator

from vrsim.errors import ConfigError
from vrsim.models import Algorithm, DelayMode, ModelKind, Sampling, X0Init

Auto = Literal["auto"]
SEED_LIMIT = 2**64


def ceil_sqrt(n: int) -> int:
    root = math.isqrt(n)
    return root if root * root == n else root + 1


# ── Data ───────────────────────────────────────────────


class CsvSchema(BaseModel):
    label_column: str = "label"
    id_column: str = "id"
    positive_label: str | None = None
    drop_columns: list[str] = Field(default_factory=list)


# ── Runs ───────────────────────────────────────────────


class ResolvedParams(BaseModel):
    """Concrete q, |S| and η after the ``auto`` rules are applied."""

    q: int
    batch: int
    eta: float
    eta_rule: bool


class _RunConfigBase(BaseModel):
    model_config = ConfigDict(populate_by_name=True, extra="forbid", frozen=True)

    objective: ModelKind = Field(ModelKind.QUADRATIC, alias="model")
    algorithm: Algorithm = Algorithm.SYNTHESIS
    n_samples: PositiveInt | None = Field(None, alias="N")
    dim: PositiveInt | None = Field(None, alias="d")
    max_delay: int = Field(0, alias="delta", ge=0)
    q: PositiveInt | Auto = "auto"
    batch: PositiveInt | Auto = "auto"
    eta: PositiveFloat | Auto = "auto"
    iterations: PositiveInt = Field(..., alias="K")
    seed: int = Field(0, ge=0, lt=SEED_LIMIT)
    delay_mode: DelayMode = DelayMode.DIRECT
    output: str | None = None

    x0: X0Init = X0Init.ZEROS
    reg: float = Field(0.0, ge=0)
    spectrum: list[PositiveFloat] | None = None
    hidden: PositiveInt = 32
    classes: int = Field(2, ge=2)
    symmetric: bool = False
    label_noise: float = Field(0.1, ge=0, le=0.5)
    csv_path: str | None = None
    csv_label: str = "label"
    csv_positive: str | None = None
    domain_radius: PositiveFloat | None = None
    eval_every: PositiveInt | None = None
    # accuracy target for the theory report only
    eps: PositiveFloat | None = None

    eta_rule_factor: ClassVar[float] = 4.0

    @model_validator(mode="after")
    def _check_shape(self):
        if self.csv_path is None and (self.n_samples is None or self.dim is None):
            raise ValueError("N and d are required unless csv_path is given")
        if self.spectrum is not None and self.dim is not None and len(self.spectrum) != self.dim:
            raise ValueError(f"spectrum has {len(self.spectrum)} entries, expected d={self.dim}")
        return self

    @property
    def worker_count(self) -> int:
        raise NotImplementedError

    def resolve(self, n_samples: int, smoothness: float) -> ResolvedParams:
        """Apply the theorem parameter rules to every ``auto`` field."""
        q = ceil_sqrt(n_samples) if self.q == "auto" else self.q
        batch = ceil_sqrt(n_samples) if self.batch == "auto" else self.batch
        eta_rule = self.eta == "auto"
        eta = 1.0 / (self.eta_rule_factor * smoothness * (self.max_delay + 1)) if eta_rule else self.eta
        return ResolvedParams(q=q, batch=batch, eta=eta, eta_rule=eta_rule)

    def config_hash(self) -> str:
        """Digest of every field that changes the run; seed, output and eps excluded."""
        payload = self.model_dump(mode="json", exclude={"seed", "output", "eps"})
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


class RunConfig(_RunConfigBase):
    """Distributed-memory run: P workers, one parameter server."""

    arch: Literal["dm"] = "dm"
    workers: PositiveInt = Field(1, alias="P")
    sampling: Sampling = Sampling.SHARD

    @property
    def worker_count(self) -> int:
        return self.workers


class SharedRunConfig(_RunConfigBase):
    """Shared-memory run: T threads, single-coordinate updates."""

    arch: Literal["sm"] = "sm"
    threads: PositiveInt = Field(1, alias="T")
    full_step_on_sync: bool = False
    eta_rule_factor: ClassVar[float] = 2.0

    @property
    def worker_count(self) -> int:
        return self.threads


AnyRunConfig = RunConfig | SharedRunConfig


def parse_run_config(table: dict) -> AnyRunConfig:
    """Build the config class matching the ``arch`` entry (default dm)."""
    table = dict(table)
    arch = table.pop("arch", "dm")
    if arch == "sm":
        table.pop("sampling", None)
        if "P" in table or "workers" in table:
            table.setdefault("T", table.pop("P", table.pop("workers", 1)))
        return SharedRunConfig(**table)
    if arch != "dm":
        raise ConfigError(f"arch must be 'dm' or 'sm', got {arch!r}")
    table.pop("full_step_on_sync", None)
    if "T" in table or "threads" in table:
        table.setdefault("P", table.pop("T", table.pop("threads", 1)))
    return RunConfig(**table)


def as_table(config: AnyRunConfig) -> dict:
    """Inverse of :func:`parse_run_config`."""
    return config.model_dump(mode="json", by_alias=True)


# ── Theory ─────────────────────────────────────────────


class TheoryInputs(BaseModel):
    smoothness: float = Field(..., gt=0, alias="L")
    lipschitz: float = Field(1.0, gt=0, alias="M")
    strong_convexity: float = Field(0.0, ge=0, alias="mu")
    n_samples: PositiveInt = Field(..., alias="N")
    q: PositiveInt
    batch: PositiveInt
    iterations: PositiveInt = Field(..., alias="K")
    workers: PositiveInt = Field(1, alias="P")
    max_delay: int = Field(0, ge=0, alias="delta")
    dim: PositiveInt = Field(1, alias="d")
    eta: PositiveFloat
    f_gap: float = Field(1.0, ge=0)
    eps1: float = Field(0.0, ge=0)

    model_config = ConfigDict(populate_by_name=True)


# ── Reports ────────────────────────────────────────────


class RunSummary(BaseModel):
    algorithm: Algorithm
    arch: str
    config_hash: str
    seed: int
    iterations: int
    q: int
    batch: int
    eta: float
    workers: int
    max_delay: int
    delay_mode: DelayMode
    final_loss: float
    grad_norm_sq_at_zeta: float
    zeta: int
    sfo_paper: int
    sfo_true: int
    max_tau: int
    interrupted_jobs: int
    beta1: float | None = None
    predicted_bound: float | None = None
    predicted_bound_kind: str | None = None
    within_predicted: bool | None = None
    f_gap: float | None = None
    f_gap_approximate: bool = False
    constants_approximate: bool = False


class StabilityReport(BaseModel):
    algorithm: Algorithm
    arch: str
    eta: float
    n_samples: int
    iterations: int
    dim: int
    max_delay: int
    seed: int
    delta_norm: float
    norm_delta_norm: float
    loss_proxy: float
    probe_loss_gap: float
    step_perturbation_max: float
    convexity: str
    bound: float
    loss_bound: float
    statement_bound: float | None = None
    within_bound: bool
    coupled: bool = True


class ExperimentSpec(BaseModel):
    """A base config and the sweep axes crossed over it."""

    base: RunConfig | SharedRunConfig
    deltas: list[int] = Field(default_factory=list)
    n_values: list[PositiveInt] = Field(default_factory=list)
    etas: list[PositiveFloat] = Field(default_factory=list)
    seeds: list[int] = Field(default_factory=list)
    algorithms: list[Algorithm] = Field(default_factory=list)
    out_dir: str = "runs"
    allow_large: bool = False

    def size(self) -> int:
        return math.prod(max(len(axis), 1) for axis in self._axes().values())

    def _axes(self) -> dict[str, list]:
        return {
            "delta": self.deltas,
            "N": self.n_values,
            "eta": self.etas,
            "seed": self.seeds,
            "algorithm": [a.value for a in self.algorithms],
        }

    def expand(self, limit: int = 10_000) -> list[AnyRunConfig]:
        """Cross-product of the non-empty axes applied to the base config."""
        if self.size() > limit and not self.allow_large:
            raise ConfigError(f"sweep has {self.size()} runs, more than {limit}; pass the override flag to run it")
        axes = {name: values for name, values in self._axes().items() if values}
        table = as_table(self.base)
        configs = []
        for combo in itertools.product(*axes.values()):
            configs.append(parse_run_config({**table, **dict(zip(axes, combo))}))
        return configs
