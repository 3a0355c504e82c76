"""Enumerations and the run-ledger ORM model."""

from datetime import datetime, timezone
import enum

from sqlalchemy import Column, DateTime, Integer, String, UniqueConstraint

from vrsim.database import Base


def _utcnow():
    return datetime.now(timezone.utc)


# ── Enums ──────────────────────────────────────────────


class ModelKind(str, enum.Enum):
    QUADRATIC = "quadratic"
    LOGISTIC = "logistic"
    MLP = "mlp"


class Architecture(str, enum.Enum):
    DISTRIBUTED = "dm"
    SHARED = "sm"


class Algorithm(str, enum.Enum):
    SYNTHESIS = "synthesis"
    ASYNC_SGD = "async-sgd"
    ASYNC_SVRG = "async-svrg"


class DelayMode(str, enum.Enum):
    DIRECT = "direct"
    SERVICE_TIME = "service-time"


class X0Init(str, enum.Enum):
    ZEROS = "zeros"
    GAUSSIAN = "gaussian"


class Sampling(str, enum.Enum):
    SHARD = "shard"
    GLOBAL = "global"


class Provenance(str, enum.Enum):
    SYNTHETIC_QUADRATIC = "synthetic-quadratic"
    SYNTHETIC_LOGISTIC = "synthetic-logistic"
    CSV = "csv"


class Convexity(str, enum.Enum):
    QUADRATIC_SC = "quadratic-sc"
    NONCONVEX = "nonconvex"


class PlotKind(str, enum.Enum):
    LOSS_VS_ITER = "loss-vs-iter"
    LOSS_VS_SFO = "loss-vs-sfo"
    GRADNORM = "gradnorm"
    STABILITY = "stability"


# ── Ledger ─────────────────────────────────────────────


class RunRecord(Base):
    __tablename__ = "runs"
    __table_args__ = (UniqueConstraint("trace_path", name="uq_runs_trace_path"),)

    id = Column(Integer, primary_key=True, autoincrement=True)
    config_hash = Column(String(64), nullable=False, index=True)
    seed = Column(String(20), nullable=False)  # decimal; u64 seeds overflow BIGINT
    algorithm = Column(String(20), nullable=False)
    arch = Column(String(4), nullable=False)
    trace_path = Column(String(500), nullable=False)
    summary_path = Column(String(500), nullable=False)
    digest = Column(String(64), nullable=False)
    created_at = Column(DateTime, default=_utcnow)
    updated_at = Column(DateTime, default=_utcnow, onupdate=_utcnow)
