"""``vrsim sweep``: cross product of Δ, N, η, seed and algorithm axes over a base config."""

import argparse

from vrsim.commands import add_config_args, add_output_args, comma_list, load_config
from vrsim.schemas import ExperimentSpec
from vrsim.services.experiments import out_dir_for, seed_list, sweep


def register(subparsers) -> None:
    parser = subparsers.add_parser("sweep", help="run a parameter sweep")
    add_config_args(parser, algo_list=True)
    add_output_args(parser)
    parser.add_argument("--delta", type=comma_list(int), default=[], help="max delay values, e.g. 0,4,16")
    parser.add_argument("--n", type=comma_list(int), default=[], help="dataset sizes")
    parser.add_argument("--eta", type=comma_list(float), default=[], help="step sizes")
    parser.add_argument("--seeds", type=int, help="number of seeds, counting up from the config seed")
    parser.add_argument("--seed-list", type=comma_list(int), help="explicit seeds")
    parser.add_argument("--allow-large", action="store_true", help="permit sweeps above the run cap")
    parser.set_defaults(func=handle)


def handle(args: argparse.Namespace) -> int:
    base = load_config(args)
    spec = ExperimentSpec(
        base=base,
        deltas=args.delta,
        n_values=args.n,
        etas=args.eta,
        seeds=seed_list(args.seeds, args.seed_list, base.seed),
        algorithms=args.algo or [],
        out_dir=str(out_dir_for(base, args.out)),
        allow_large=args.allow_large,
    )
    aggregate, path = sweep(spec, force=args.force)
    print(f"{len(aggregate)} runs; aggregate written to {path}")
    return 0
