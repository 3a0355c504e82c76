"""Run ledger database setup and session management."""

from pathlib import Path

from sqlalchemy import create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

from vrsim.config import settings

Base = declarative_base()


def ledger_url_for(out_dir: Path) -> str:
    """Ledger URL: the configured one, else a SQLite file inside the output directory."""
    if settings.ledger_url:
        return settings.ledger_url
    return f"sqlite:///{Path(out_dir).resolve() / 'ledger.sqlite'}"


def make_session_factory(url: str) -> sessionmaker:
    """Create the engine, make sure the tables exist and return a session factory."""
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    engine = create_engine(url, connect_args=connect_args)
    Base.metadata.create_all(bind=engine)
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)
