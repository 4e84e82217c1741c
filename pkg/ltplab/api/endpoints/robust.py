from pathlib import Path

from ltplab.api.arguments import add_run_config_args, load_config
from ltplab.api.endpoints.train import datasets
from ltplab.services.robustness_service import RobustnessService


def register(subparsers):
    parser = subparsers.add_parser("robust", help="train on short sequences, evaluate per length quantile")
    add_run_config_args(parser)
    parser.add_argument("--train", help="training JSONL (default: <output-dir>/data/train.jsonl)")
    parser.add_argument("--eval", help="evaluation JSONL (default: <output-dir>/data/eval.jsonl)")
    parser.set_defaults(handler=run)


def run(args, run_id):
    cfg = load_config(args)
    train, evaluation = datasets(args, cfg)
    result = RobustnessService().run(cfg, train, evaluation, Path(cfg.output_dir) / "robust", run_id=run_id)
    return result, result.pop("warnings")
