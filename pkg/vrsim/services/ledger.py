"""
Run ledger.

Output files are named from (algorithm, arch, config hash, seed) and never
silently overwritten; every written run is recorded in the SQL ledger.
"""

from __future__ import annotations

import hashlib
import logging
from datetime import datetime, timezone
from pathlib import Path

from sqlalchemy import select

from vrsim.database import ledger_url_for, make_session_factory
from vrsim.errors import OutputConflictError
from vrsim.models import RunRecord

logger = logging.getLogger(__name__)


def output_stem(algorithm: str, arch: str, config_hash: str, seed: int) -> str:
    return f"{algorithm}-{arch}-{config_hash[:12]}-seed{seed}"


def digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_output(path: Path, text: str, force: bool = False) -> bool:
    """Write ``text`` to ``path``. Returns False when identical content is already there."""
    path = Path(path)
    if path.exists():
        existing = path.read_text(encoding="utf-8")
        if existing == text:
            return False
        if not force:
            raise OutputConflictError(f"{path} exists with different content; pass --force to overwrite")
        logger.info("Overwriting %s", path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return True


class RunLedger:
    def __init__(self, out_dir: Path):
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        self._sessions = make_session_factory(ledger_url_for(out_dir))

    def record(
        self,
        *,
        config_hash: str,
        seed: int,
        algorithm: str,
        arch: str,
        trace_path: Path,
        summary_path: Path,
        content_digest: str,
    ) -> RunRecord:
        """Insert or refresh the record keyed by trace path."""
        with self._sessions() as db:
            record = db.scalars(select(RunRecord).where(RunRecord.trace_path == str(trace_path))).first()
            if record is None:
                record = RunRecord(trace_path=str(trace_path))
                db.add(record)
            record.config_hash = config_hash
            record.seed = str(seed)
            record.algorithm = algorithm
            record.arch = arch
            record.summary_path = str(summary_path)
            record.digest = content_digest
            record.updated_at = datetime.now(timezone.utc)
            db.commit()
            db.refresh(record)
            return record

    def runs(self, config_hash: str | None = None) -> list[RunRecord]:
        with self._sessions() as db:
            query = select(RunRecord).order_by(RunRecord.id)
            if config_hash is not None:
                query = query.where(RunRecord.config_hash == config_hash)
            return list(db.scalars(query))
