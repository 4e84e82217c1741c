"""
Length-robustness protocol: train on sequences no longer than the evaluation
median, then evaluate on the short, middle and long quantile subsets.

Learned thresholds prune by score, so the pruned fraction follows the content
of each sequence. The baseline keeps a fixed number of tokens per layer for
every input, so the fraction it removes grows with length.
"""

import logging
import math
import time
from pathlib import Path
from typing import Sequence

from ltplab.controllers.datagen import Example, quantile_split
from ltplab.controllers.encoder import EncoderModel
from ltplab.controllers.error_validator import ErrorValidator
from ltplab.controllers.pruning import PruneContext, PruneMode
from ltplab.controllers.trainer import (
    EvalResult,
    binarize_and_fix,
    evaluate,
    init_thresholds,
    pretrain,
    train_hard,
    train_soft,
)
from ltplab.core.errors import DataGenError
from ltplab.core.run_config import RunConfig
from ltplab.utils.file_utils import ensure_dir, write_csv, write_json

logger = logging.getLogger("ltplab.service")

METHODS = ("ltp", "fixed_topk")
METRICS = ("accuracy", "relative_flops")
SPLITS = ("~Q2", "Q2~Q3", "Q3~")
NA = "n/a"


def calibrate_counts(mean_retained: Sequence[float]) -> list[int]:
    """Rounded mean retained tokens per layer, made non-increasing and >= 1."""
    counts, ceiling = [], math.inf
    for value in mean_retained:
        ceiling = min(ceiling, max(1, int(round(value))))
        counts.append(int(ceiling))
    return counts


def _metric(result: EvalResult | None, metric: str):
    if result is None or result.count == 0:
        return NA
    if metric == "accuracy":
        return result.accuracy
    return result.flops.relative


class RobustnessService:
    def run(
        self,
        cfg: RunConfig,
        train: Sequence[Example],
        eval_data: Sequence[Example],
        out_dir: str | Path,
        run_id: str = None,
    ) -> dict:
        start_time = time.time()
        out_dir = ensure_dir(out_dir)
        validator = ErrorValidator()

        split = quantile_split(eval_data, train)
        if not split.train_short:
            raise DataGenError(f"no training sequences at or below the median length {split.q2}")
        subsets = split.subsets()
        validator.check_cells({name: len(items) for name, items in subsets.items()})
        logger.info(
            f"[{run_id}] Start robustness | q2={split.q2} | q3={split.q3} "
            f"| train_short={len(split.train_short)} | "
            + " | ".join(f"{name}={len(items)}" for name, items in subsets.items())
        )

        base = EncoderModel(cfg.model, seed=cfg.seed)
        pretrain(base, split.train_short, cfg.pretrain)

        ltp_model = base.clone()
        thresholds = init_thresholds(cfg.prune.theta_final, cfg.model.num_layers, cfg.soft.temperature)
        train_soft(ltp_model, thresholds, split.train_short, cfg.soft)
        ltp_ctx = binarize_and_fix(thresholds)
        train_hard(ltp_model, ltp_ctx, split.train_short, cfg.hard)

        counts = list(cfg.robust.baseline_counts)
        if not counts:
            on_train = evaluate(ltp_model, ltp_ctx, split.train_short)
            counts = calibrate_counts(on_train.summary.mean_retained)
        baseline_ctx = PruneContext(mode=PruneMode.TOPK, counts=counts)
        baseline_model = base.clone()
        train_hard(baseline_model, baseline_ctx, split.train_short, cfg.hard)

        results = {
            "ltp": {name: evaluate(ltp_model, ltp_ctx, items) for name, items in subsets.items()},
            "fixed_topk": {name: evaluate(baseline_model, baseline_ctx, items) for name, items in subsets.items()},
        }

        table = [
            [method, metric] + [_metric(results[method][name], metric) for name in SPLITS]
            for method in METHODS
            for metric in METRICS
        ]
        csv_path = write_csv(out_dir / "robust.csv", ["method", "metric", *SPLITS], table)
        payload = {
            "q2": split.q2,
            "q3": split.q3,
            "train_short": len(split.train_short),
            "split_sizes": {name: len(items) for name, items in subsets.items()},
            "thresholds": thresholds.to_list(),
            "baseline_counts": counts,
            "table": {
                method: {
                    metric: {name: _metric(results[method][name], metric) for name in SPLITS}
                    for metric in METRICS
                }
                for method in METHODS
            },
            "warnings": validator.get_warnings(),
        }
        json_path = write_json(out_dir / "robust.json", payload)

        duration = round(time.time() - start_time, 2)
        logger.info(f"[{run_id}] Robustness completed | counts={counts} | duration={duration}s")
        return {"robust_csv": str(csv_path), "robust_json": str(json_path), **payload}
