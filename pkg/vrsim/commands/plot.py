"""``vrsim plot``: SVG line chart from trace or stability-series CSV files."""

import argparse
from pathlib import Path

from vrsim.models import PlotKind
from vrsim.services.plotting import plot


def register(subparsers) -> None:
    parser = subparsers.add_parser("plot", help="render traces as an SVG chart")
    parser.add_argument("traces", nargs="*", type=Path, help="trace CSV files")
    parser.add_argument("--kind", choices=[k.value for k in PlotKind], default=PlotKind.LOSS_VS_ITER.value)
    parser.add_argument("--out", type=Path, default=Path("plot.svg"), help="SVG file to write")
    parser.add_argument("--log-y", action="store_true", help="logarithmic y axis")
    parser.add_argument("--title")
    parser.set_defaults(func=handle)


def handle(args: argparse.Namespace) -> int:
    path = plot(args.traces, PlotKind(args.kind), args.out, log_y=args.log_y, title=args.title)
    print(path)
    return 0
