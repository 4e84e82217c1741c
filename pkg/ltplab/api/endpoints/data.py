from ltplab.api.arguments import add_run_config_args, load_config
from ltplab.core.errors import UsageError
from ltplab.services.data_service import DataService


def register(subparsers):
    gen = subparsers.add_parser("gen", help="generate train/eval datasets and length statistics")
    add_run_config_args(gen)
    gen.set_defaults(handler=run_gen)

    stats = subparsers.add_parser("stats", help="length quartiles, histogram and KL of a dataset")
    stats.add_argument("--dataset", required=True)
    stats.add_argument("--reference", help="dataset the KL divergence is measured against")
    stats.add_argument("--bins", type=int, default=20)
    stats.set_defaults(handler=run_stats)


def run_gen(args, run_id):
    cfg = load_config(args)
    return DataService().generate(cfg, run_id=run_id), []


def run_stats(args, run_id):
    if args.bins < 2:
        raise UsageError("--bins must be >= 2")
    return DataService().stats(args.dataset, args.reference, args.bins), []
