"""
vrsim: deterministic simulator for semi-asynchronous variance-reduced optimization.

Command-line entry point. Subcommands live in ``vrsim.commands`` and are
registered here.
"""

from __future__ import annotations

import argparse
import logging
import sys

from pydantic import ValidationError

from vrsim import __version__
from vrsim.commands import compare, plot, run, stability, sweep, theory
from vrsim.config import settings
from vrsim.errors import ConfigError, VrsimError

logger = logging.getLogger("vrsim")

EXIT_CONFIG = 2
EXIT_RUNTIME = 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vrsim",
        description="Simulate SYNTHESIS, Async-SGD and Async-SVRG; check them against their theory.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=settings.log_level, help="logging level (default from VRSIM_LOG_LEVEL)")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # ── Subcommands ────────────────────────────────────
    for command in (run, sweep, compare, stability, theory, plot):
        command.register(subparsers)
    return parser


def _describe(exc: ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(part) for part in error['loc']) or 'config'}: {error['msg']}" for error in exc.errors()
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=args.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"vrsim: invalid config: {_describe(exc)}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"vrsim: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VrsimError as exc:
        print(f"vrsim: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        logger.debug("unhandled failure", exc_info=True)
        print(f"vrsim: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
