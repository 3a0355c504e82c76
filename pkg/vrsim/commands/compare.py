"""``vrsim compare``: SYNTHESIS and the baselines on one dataset and seed."""

import argparse

from vrsim.commands import add_config_args, add_output_args, load_config
from vrsim.models import Algorithm
from vrsim.services.experiments import compare, out_dir_for


def register(subparsers) -> None:
    parser = subparsers.add_parser("compare", help="compare algorithms at a fixed seed")
    add_config_args(parser, algo_list=True)
    add_output_args(parser)
    parser.add_argument("--target", type=float, help="loss target for the SFO-to-target column")
    parser.set_defaults(func=handle)


def handle(args: argparse.Namespace) -> int:
    config = load_config(args)
    algorithms = args.algo or list(Algorithm)
    table, path = compare(config, algorithms, out_dir_for(config, args.out), force=args.force, target=args.target)
    print(table.to_string(index=False))
    print(f"written to {path}")
    return 0
