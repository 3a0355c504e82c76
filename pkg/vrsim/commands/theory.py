"""``vrsim theory``: closed-form quantities for a configuration, as JSON."""

import argparse
import json

from vrsim.commands import add_config_args, load_config
from vrsim.services.analysis import theory_report
from vrsim.services.engine import build_model
from vrsim.services.experiments import dataset_for


def register(subparsers) -> None:
    parser = subparsers.add_parser("theory", help="print beta1, predicted bounds and SFO formulas")
    add_config_args(parser)
    parser.add_argument("--eps", type=float, help="also report the iterations and SFO calls for this accuracy")
    parser.set_defaults(func=handle)


def handle(args: argparse.Namespace) -> int:
    config = load_config(args, **({"eps": args.eps} if args.eps is not None else {}))
    dataset = dataset_for(config)
    report = theory_report(config, dataset, build_model(config, dataset))
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0
