from pathlib import Path

from ltplab.api.arguments import add_run_config_args, load_config
from ltplab.services.training_service import TrainingService
from ltplab.utils.file_utils import load_dataset


def register(subparsers):
    parser = subparsers.add_parser("train", help="pretrain, soft-train, binarize and hard fine-tune")
    add_run_config_args(parser)
    parser.add_argument("--train", help="training JSONL (default: <output-dir>/data/train.jsonl)")
    parser.add_argument("--eval", help="evaluation JSONL (default: <output-dir>/data/eval.jsonl)")
    parser.add_argument("--sweep", choices=["lambda", "temperature"],
                        help="run one pipeline per configured sweep value")
    parser.set_defaults(handler=run)


def datasets(args, cfg):
    data_dir = Path(cfg.output_dir) / "data"
    train = load_dataset(args.train or data_dir / "train.jsonl")
    evaluation = load_dataset(args.eval or data_dir / "eval.jsonl")
    return train, evaluation


def run(args, run_id):
    cfg = load_config(args)
    train, evaluation = datasets(args, cfg)
    service = TrainingService()

    if args.sweep:
        result = service.run_sweep(cfg, args.sweep, train, evaluation,
                                   Path(cfg.output_dir) / f"sweep_{args.sweep}", run_id=run_id)
        return result, []

    summary = service.run_pipeline(cfg, train, evaluation, Path(cfg.output_dir) / "train", run_id=run_id)
    for key in ("baseline", "binarized", "final"):
        if summary[key]["summary"] is not None:
            summary[key]["summary"].pop("trajectories")
    return summary, []
