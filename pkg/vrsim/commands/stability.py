"""``vrsim stability``: coupled runs on adjacent datasets, tabulated against the bounds."""

import argparse
from pathlib import Path

from vrsim.commands import add_config_args, add_output_args, comma_list, load_config
from vrsim.models import Algorithm
from vrsim.services.experiments import out_dir_for, seed_list
from vrsim.services.ledger import output_stem, write_output
from vrsim.services.stability import stability_table


def register(subparsers) -> None:
    parser = subparsers.add_parser("stability", help="measure algorithmic stability")
    add_config_args(parser, algo_list=True)
    add_output_args(parser)
    parser.add_argument("--archs", type=comma_list(str), help="architectures to tabulate, e.g. dm,sm")
    parser.add_argument("--seeds", type=int, default=10, help="number of seeds, counting up from the config seed")
    parser.add_argument("--seed-list", type=comma_list(int), help="explicit seeds")
    parser.add_argument("--series", action="store_true", help="also write the per-run delta series")
    parser.set_defaults(func=handle)


def handle(args: argparse.Namespace) -> int:
    base = load_config(args)
    configs = [load_config(args, arch=arch) for arch in args.archs] if args.archs else [base]
    algorithms = args.algo or list(Algorithm)
    out_dir = out_dir_for(base, args.out)

    def write_series(config, pair):
        stem = output_stem(pair.trace.algorithm.value, config.arch, pair.trace.config_hash, config.seed)
        text = pair.series.to_csv(index=False, lineterminator="\n")
        write_output(Path(out_dir) / f"stability-{stem}.csv", text, args.force)

    table = stability_table(
        configs,
        algorithms,
        seed_list(args.seeds, args.seed_list, base.seed),
        on_pair=write_series if args.series else None,
    )
    path = Path(out_dir) / f"stability-{base.config_hash()[:12]}.csv"
    write_output(path, table.to_csv(index=False, lineterminator="\n"), args.force)
    print(table.to_string(index=False))
    print(f"written to {path}")
    return 0
