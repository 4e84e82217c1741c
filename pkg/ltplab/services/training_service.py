import dataclasses
import logging
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from ltplab.controllers.checkpoint import save_checkpoint
from ltplab.controllers.datagen import Example
from ltplab.controllers.encoder import EncoderModel
from ltplab.controllers.pruning import PruneContext
from ltplab.controllers.trainer import (
    TrainReport,
    binarize_and_fix,
    evaluate,
    init_thresholds,
    pretrain,
    train_hard,
    train_soft,
)
from ltplab.core.config import settings
from ltplab.core.errors import ConfigError, SweepError, TrainingDivergedError
from ltplab.core.job_queue import create_job, get_job_result
from ltplab.core.run_config import RunConfig
from ltplab.utils.file_utils import ensure_dir, save_thresholds, write_csv, write_json
from ltplab.workers.sweep_worker import start_workers, wait_for_jobs

logger = logging.getLogger("ltplab.service")

SWEEP_HEADER = ["lambda", "temperature", "accuracy", "relative_flops", "mean_retained"]


def _write_report(out_dir: Path, report: TrainReport) -> Path:
    path = out_dir / f"report_{report.stage}.jsonl"
    path.write_text(report.to_jsonl(), encoding="utf-8")
    return path


class TrainingService:
    def _stage(self, out_dir: Path, fn, *args) -> TrainReport:
        try:
            report = fn(*args)
        except TrainingDivergedError as e:
            if e.report is not None:
                _write_report(out_dir, e.report)
            raise
        _write_report(out_dir, report)
        return report

    def run_pipeline(
        self,
        cfg: RunConfig,
        train: Sequence[Example],
        eval_data: Sequence[Example],
        out_dir: str | Path,
        lam: float | None = None,
        temperature: float | None = None,
        run_id: str = None,
    ) -> dict:
        """Pretrain, soft-train, binarize, hard fine-tune, then evaluate."""
        start_time = time.time()
        out_dir = ensure_dir(out_dir)
        soft_cfg = cfg.soft
        if lam is not None:
            soft_cfg = dataclasses.replace(soft_cfg, lam=lam)
        if temperature is not None:
            soft_cfg = dataclasses.replace(soft_cfg, temperature=temperature)
        soft_cfg.validate()

        logger.info(
            f"[{run_id}] Start pipeline | lambda={soft_cfg.lam} | temperature={soft_cfg.temperature} "
            f"| train={len(train)} | eval={len(eval_data)} | out={out_dir}"
        )

        try:
            model = EncoderModel(cfg.model, seed=cfg.seed)

            self._stage(out_dir, pretrain, model, train, cfg.pretrain)
            save_checkpoint(out_dir / "pretrain.npz", model, stage="pretrain")
            baseline = evaluate(model, PruneContext(), eval_data)

            thresholds = init_thresholds(cfg.prune.theta_final, cfg.model.num_layers,
                                         soft_cfg.temperature)
            self._stage(out_dir, train_soft, model, thresholds, train, soft_cfg)
            save_checkpoint(out_dir / "soft.npz", model, thresholds, stage="soft")

            ctx = binarize_and_fix(thresholds)
            binarized = evaluate(model, ctx, eval_data)

            self._stage(out_dir, train_hard, model, ctx, train, cfg.hard)
            save_checkpoint(out_dir / "hard.npz", model, thresholds, stage="hard")
            final = evaluate(model, ctx, eval_data)
            save_thresholds(out_dir / "thresholds.json", thresholds)

            summary = {
                "lambda": soft_cfg.lam,
                "temperature": soft_cfg.temperature,
                "thresholds": thresholds.to_list(),
                "baseline": baseline.to_dict(),
                "binarized": binarized.to_dict(),
                "final": final.to_dict(),
            }
            write_json(out_dir / "summary.json", summary)

            duration = round(time.time() - start_time, 2)
            logger.info(
                f"[{run_id}] Pipeline completed | accuracy={final.accuracy} "
                f"| relative_flops={final.flops.relative if final.flops else None} | duration={duration}s"
            )
            return summary

        except Exception as e:
            duration = round(time.time() - start_time, 2)
            logger.error(f"[{run_id}] Pipeline failed | duration={duration}s | error={str(e)}")
            raise

    # ----------------------------------
    # Sweeps
    # ----------------------------------

    def run_sweep(
        self,
        cfg: RunConfig,
        kind: str,
        train: Sequence[Example],
        eval_data: Sequence[Example],
        out_dir: str | Path,
        run_id: str = None,
    ) -> dict:
        """One queued pipeline job per sweep point; writes summary.csv."""
        if kind == "lambda":
            points = [("lam", value) for value in cfg.sweep.lambdas]
        elif kind == "temperature":
            points = [("temperature", value) for value in cfg.sweep.temperatures]
        else:
            raise ConfigError(f"unknown sweep '{kind}'")
        if not points:
            raise ConfigError(f"sweep '{kind}' has no values")

        out_dir = ensure_dir(out_dir)
        start_time = time.time()

        job_ids = []
        for key, value in points:
            job_ids.append(create_job(
                self.run_pipeline,
                {
                    "cfg": cfg,
                    "train": train,
                    "eval_data": eval_data,
                    "out_dir": out_dir / f"{kind}_{value:g}",
                    key: value,
                    "run_id": run_id,
                },
                label=f"{kind}={value:g}",
            ))
            logger.info(f"[{run_id}] Job created | job_id={job_ids[-1]} | {kind}={value:g}")

        start_workers(settings.WORKERS)
        wait_for_jobs()

        rows, failures = [], []
        for job_id, (key, value) in zip(job_ids, points):
            job = get_job_result(job_id)
            if job["status"] != "completed":
                failures.append((value, job))
                rows.append([
                    value if key == "lam" else cfg.soft.lam,
                    value if key == "temperature" else cfg.soft.temperature,
                    "n/a", "n/a", "n/a",
                ])
                continue
            summary = job["result"]
            final = summary["final"]
            mean_retained = float(np.mean(final["summary"]["mean_retained"])) if final["summary"] else None
            relative = final["flops"]["relative"] if final["flops"] else None
            rows.append([summary["lambda"], summary["temperature"], final["accuracy"], relative, mean_retained])

        csv_path = write_csv(out_dir / "summary.csv", SWEEP_HEADER, rows)
        duration = round(time.time() - start_time, 2)

        if failures:
            logger.error(
                f"[{run_id}] Sweep failed | kind={kind} | failed={len(failures)}/{len(points)} "
                f"| summary={csv_path} | duration={duration}s"
            )
            details = "; ".join(f"{kind}={value:g}: {job.get('error')}" for value, job in failures)
            if all(isinstance(job.get("exception"), ConfigError) for _, job in failures):
                raise ConfigError(f"invalid sweep points: {details}")
            raise SweepError(f"{len(failures)} of {len(points)} sweep points failed: {details}")

        logger.info(f"[{run_id}] Sweep completed | kind={kind} | points={len(rows)} | duration={duration}s")
        return {"summary_csv": str(csv_path), "rows": rows}
