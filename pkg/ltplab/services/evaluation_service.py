import logging
import time
from pathlib import Path
from typing import Sequence

from ltplab.controllers.checkpoint import load_checkpoint
from ltplab.controllers.datagen import Example
from ltplab.controllers.encoder import EncoderModel
from ltplab.controllers.error_validator import ErrorValidator
from ltplab.controllers.pruning import (
    SPATTEN_DENSE_LAYERS,
    PruneContext,
    PruneMode,
    ThresholdSet,
    manual_thresholds,
    spatten_schedule,
)
from ltplab.controllers.trainer import EvalResult, evaluate
from ltplab.core.errors import ConfigError, PruningError
from ltplab.core.run_config import RunConfig
from ltplab.utils.file_utils import ensure_dir, write_csv, write_json

logger = logging.getLogger("ltplab.service")

SWEEP_HEADER = ["method", "parameter", "accuracy", "relative_flops"]


def build_context(
    mode: str,
    num_layers: int,
    thresholds: ThresholdSet | None = None,
    final_ratio: float | None = None,
    theta_final: float | None = None,
    counts: Sequence[int] | None = None,
) -> PruneContext:
    """Maps command flags onto a pruning context, rejecting incomplete combinations."""
    try:
        mode = PruneMode(mode)
    except ValueError:
        raise ConfigError(f"unknown mode '{mode}'") from None
    if mode == PruneMode.SOFT:
        raise ConfigError("mode 'soft' is a training mode; evaluate with 'hard'")

    try:
        if mode == PruneMode.NONE:
            return PruneContext()
        if mode == PruneMode.HARD:
            if thresholds is None:
                raise ConfigError("mode 'hard' needs learned thresholds (checkpoint or --thresholds)")
            thresholds.freeze()
            return PruneContext(mode=mode, thresholds=thresholds)
        if mode == PruneMode.MANUAL:
            if theta_final is None:
                raise ConfigError("mode 'manual' needs --theta-final")
            return PruneContext(mode=mode, thresholds=manual_thresholds(theta_final, num_layers))
        if mode == PruneMode.SPATTEN:
            if final_ratio is None:
                raise ConfigError("mode 'spatten' needs --final-ratio")
            return PruneContext(mode=mode, schedule=spatten_schedule(final_ratio, num_layers))
        if counts:
            return PruneContext(mode=mode, counts=list(counts))
        if final_ratio is None:
            raise ConfigError("mode 'topk' needs --final-ratio or --counts")
        return PruneContext(mode=mode, schedule=[final_ratio] * num_layers)
    except PruningError as e:
        raise ConfigError(str(e)) from e


def _row(method: str, parameter, result: EvalResult) -> list:
    relative = result.flops.relative if result.flops else "n/a"
    accuracy = result.accuracy if result.accuracy is not None else "n/a"
    return [method, parameter, accuracy, relative]


class EvaluationService:
    def evaluate(
        self,
        checkpoint: str | Path,
        data: Sequence[Example],
        mode: str = "hard",
        thresholds: ThresholdSet | None = None,
        final_ratio: float | None = None,
        theta_final: float | None = None,
        counts: Sequence[int] | None = None,
        run_id: str = None,
    ) -> dict:
        start_time = time.time()
        model, stored, meta = load_checkpoint(checkpoint)
        ctx = build_context(mode, model.config.num_layers, thresholds or stored,
                            final_ratio, theta_final, counts)
        logger.info(f"[{run_id}] Start evaluation | checkpoint={checkpoint} | mode={ctx.mode.value} | n={len(data)}")

        result = evaluate(model, ctx, data)
        payload = result.to_dict()
        payload["mode"] = ctx.mode.value
        payload["stage"] = meta.get("stage")
        if payload["summary"] is not None:
            payload["summary"].pop("trajectories")

        duration = round(time.time() - start_time, 2)
        logger.info(
            f"[{run_id}] Evaluation completed | accuracy={result.accuracy} "
            f"| relative_flops={result.flops.relative if result.flops else None} | duration={duration}s"
        )
        return payload

    def sweep(
        self,
        cfg: RunConfig,
        checkpoint: str | Path,
        data: Sequence[Example],
        out_dir: str | Path,
        thresholds: ThresholdSet | None = None,
        run_id: str = None,
    ) -> dict:
        """Accuracy against relative FLOPs for spatten, manual and learned pruning."""
        start_time = time.time()
        model, stored, _ = load_checkpoint(checkpoint)
        rows = self.sweep_model(cfg, model, thresholds or stored, data)
        out_dir = ensure_dir(out_dir)
        csv_path = write_csv(out_dir / "eval_sweep.csv", SWEEP_HEADER, rows)

        duration = round(time.time() - start_time, 2)
        logger.info(f"[{run_id}] Eval sweep completed | rows={len(rows)} | duration={duration}s")
        return {"sweep_csv": str(csv_path), "rows": rows}

    def sweep_model(self, cfg: RunConfig, model: EncoderModel, learned: ThresholdSet | None,
                    data: Sequence[Example]) -> list[list]:
        num_layers = model.config.num_layers
        validator = ErrorValidator()
        rows = []

        if num_layers > SPATTEN_DENSE_LAYERS:
            for ratio in cfg.sweep.final_ratios:
                ctx = PruneContext(mode=PruneMode.SPATTEN, schedule=spatten_schedule(ratio, num_layers))
                rows.append(_row("spatten", ratio, evaluate(model, ctx, data)))
        else:
            validator.warn(f"spatten schedule skipped: needs more than {SPATTEN_DENSE_LAYERS} layers")

        for theta_final in cfg.sweep.theta_finals:
            ctx = PruneContext(mode=PruneMode.MANUAL, thresholds=manual_thresholds(theta_final, num_layers))
            rows.append(_row("manual", theta_final, evaluate(model, ctx, data)))

        if learned is not None:
            learned.freeze()
            ctx = PruneContext(mode=PruneMode.HARD, thresholds=learned)
            rows.append(_row("learned", float(learned.values[-1]), evaluate(model, ctx, data)))

        for warning in validator.get_warnings():
            logger.warning(warning)
        return rows

    def write(self, out_dir: str | Path, payload: dict) -> Path:
        return write_json(Path(out_dir) / "eval.json", payload)
