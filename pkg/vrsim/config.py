"""Process configuration."""

import os
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    threads: int = os.cpu_count() or 1
    log_level: str = "INFO"
    ledger_url: str | None = None
    max_runs: int = 10_000

    class Config:
        env_file = ".env"
        env_prefix = "VRSIM_"


settings = Settings()
