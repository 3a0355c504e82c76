"""Shared fixtures for the vrsim test suite."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from vrsim.config import settings
from vrsim.models import Provenance
from vrsim.schemas import AnyRunConfig, parse_run_config
from vrsim.services.data import Dataset


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, list):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    return repr(value)


@pytest.fixture
def run_config():
    """Factory for small quadratic configs; keyword overrides use the TOML names."""

    def build(**fields) -> AnyRunConfig:
        table = {"model": "quadratic", "N": 64, "d": 4, "P": 1, "delta": 0, "K": 100, "seed": 0}
        table.update(fields)
        return parse_run_config(table)

    return build


@pytest.fixture
def write_config(tmp_path):
    """Write a ``[run]`` table to a TOML file under tmp_path and return its path."""

    def write(name: str = "run.toml", **fields) -> Path:
        table = {"model": "quadratic", "N": 64, "d": 4, "P": 1, "delta": 0, "K": 100, "seed": 0}
        table.update(fields)
        lines = ["[run]"] + [f"{key} = {_toml_value(value)}" for key, value in table.items()]
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    return write


@pytest.fixture
def line_dataset() -> Dataset:
    """d=1 quadratic centers {1, −1}."""
    return Dataset(np.array([[1.0], [-1.0]]), None, Provenance.SYNTHETIC_QUADRATIC)


@pytest.fixture
def serial_sweeps(monkeypatch):
    monkeypatch.setattr(settings, "threads", 1)
    monkeypatch.setattr(settings, "ledger_url", None)
