"""``vrsim run``: one simulation, trace CSV and summary JSON."""

import argparse

from vrsim.commands import add_config_args, add_output_args, load_config
from vrsim.services.experiments import execute_run, out_dir_for


def register(subparsers) -> None:
    parser = subparsers.add_parser("run", help="run one configuration")
    add_config_args(parser)
    add_output_args(parser)
    parser.set_defaults(func=handle)


def handle(args: argparse.Namespace) -> int:
    config = load_config(args)
    outcome = execute_run(config, out_dir_for(config, args.out), force=args.force)
    summary = outcome.summary
    print(f"{outcome.trace_path}")
    print(f"{outcome.summary_path}")
    print(
        f"final_loss={summary.final_loss:.6g} grad_norm_sq_at_zeta={summary.grad_norm_sq_at_zeta:.6g} "
        f"sfo_paper={summary.sfo_paper} max_tau={summary.max_tau}"
    )
    return 0
