from pathlib import Path

from ltplab.api.arguments import add_run_config_args, load_config
from ltplab.controllers.pruning import PruneMode
from ltplab.core.errors import UsageError
from ltplab.services.evaluation_service import EvaluationService
from ltplab.utils.file_utils import load_dataset, load_thresholds


def register(subparsers):
    parser = subparsers.add_parser("eval", help="accuracy and relative FLOPs of a checkpoint")
    add_run_config_args(parser)
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--dataset", help="JSONL to evaluate (default: <output-dir>/data/eval.jsonl)")
    parser.add_argument("--mode", default=PruneMode.HARD.value,
                        choices=[m.value for m in PruneMode if m != PruneMode.SOFT])
    parser.add_argument("--final-ratio", type=float, help="spatten final / topk uniform retain ratio")
    parser.add_argument("--theta-final", type=float, help="manual final-layer threshold")
    parser.add_argument("--counts", type=int, nargs="+", help="topk fixed keep counts per layer")
    parser.add_argument("--thresholds", help="JSON list of thresholds, replaces the checkpoint's")
    parser.add_argument("--sweep", action="store_true",
                        help="spatten, manual and learned rows over the configured sweep values")
    parser.set_defaults(handler=run)


def run(args, run_id):
    cfg = load_config(args)
    if not Path(args.checkpoint).exists():
        raise UsageError(f"checkpoint not found: {args.checkpoint}")
    data = load_dataset(args.dataset or Path(cfg.output_dir) / "data" / "eval.jsonl")
    thresholds = load_thresholds(args.thresholds) if args.thresholds else None
    service = EvaluationService()

    if args.sweep:
        return service.sweep(cfg, args.checkpoint, data, Path(cfg.output_dir) / "eval",
                             thresholds, run_id=run_id), []

    payload = service.evaluate(args.checkpoint, data, args.mode, thresholds,
                               args.final_ratio, args.theta_final, args.counts, run_id=run_id)
    service.write(Path(cfg.output_dir) / "eval", payload)
    return payload, []
