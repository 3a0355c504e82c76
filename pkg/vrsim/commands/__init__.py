"""Command-line subcommands and the helpers they share."""

from __future__ import annotations

import argparse
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from vrsim.errors import ConfigError
from vrsim.models import Algorithm
from vrsim.schemas import SEED_LIMIT, AnyRunConfig, parse_run_config


def comma_list(kind):
    """argparse type for ``a,b,c`` values."""

    def parse(text: str) -> list:
        try:
            return [kind(item.strip()) for item in text.split(",") if item.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"invalid list {text!r}: {exc}") from exc

    return parse


def seed_arg(text: str) -> int:
    value = int(text)
    if not 0 <= value < SEED_LIMIT:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {value}")
    return value


def add_config_args(parser: argparse.ArgumentParser, algo_list: bool = False) -> None:
    parser.add_argument("--config", required=True, type=Path, help="TOML file with a [run] table")
    parser.add_argument("--seed", type=seed_arg, help="override the config seed")
    parser.add_argument("--arch", choices=["dm", "sm"], help="override the config architecture")
    if algo_list:
        parser.add_argument(
            "--algo",
            type=comma_list(Algorithm),
            help="comma list of algorithms: " + ", ".join(a.value for a in Algorithm),
        )
    else:
        parser.add_argument("--algo", choices=[a.value for a in Algorithm], help="override the config algorithm")


def add_output_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", type=Path, help="output directory (default: config output, else runs/)")
    parser.add_argument("--force", action="store_true", help="overwrite outputs whose content differs")


def load_table(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"{path}: config file not found")
    try:
        with path.open("rb") as fh:
            document = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if "run" not in document or not isinstance(document["run"], dict):
        raise ConfigError(f"{path}: missing [run] table")
    return dict(document["run"])


def load_config(args: argparse.Namespace, **overrides) -> AnyRunConfig:
    """The [run] table of ``--config`` with the command-line overrides applied."""
    table = load_table(args.config)
    if args.seed is not None:
        table["seed"] = args.seed
    if args.arch is not None:
        table["arch"] = args.arch
    algo = getattr(args, "algo", None)
    if isinstance(algo, str):
        table["algorithm"] = algo
    table.update(overrides)
    return parse_run_config(table)
