from pathlib import Path

from ltplab.api.arguments import add_run_config_args, load_config
from ltplab.services.bench_service import BenchService


def register(subparsers):
    parser = subparsers.add_parser("bench", help="threshold vs top-k selection latency")
    add_run_config_args(parser)
    parser.set_defaults(handler=run)


def run(args, run_id):
    cfg = load_config(args)
    result = BenchService().run(cfg.bench, Path(cfg.output_dir) / "bench", run_id=run_id)
    return result, result.pop("warnings")
