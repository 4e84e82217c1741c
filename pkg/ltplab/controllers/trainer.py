"""
Training loops: plain fine-tuning, soft-mask training of parameters and
thresholds, and hard-pruning fine-tuning with frozen thresholds.

The objective is L_new = L + lambda * L_reg, with L the mean cross-entropy of
the batch and L_reg the per-sequence mask regularizer averaged over the batch.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from ltplab.controllers.autodiff import backward, cross_entropy, no_grad
from ltplab.controllers.datagen import Example
from ltplab.controllers.encoder import EncoderModel
from ltplab.controllers.flops import FlopsReport, average_reports, model_flops
from ltplab.controllers.optim import DEFAULT_BETAS, DEFAULT_EPS, DEFAULT_WEIGHT_DECAY, Adam
from ltplab.controllers.pruning import (
    DEFAULT_TEMPERATURE,
    HARD_MODES,
    PruneContext,
    PruneMode,
    PruneTrace,
    ThresholdSet,
    reg_loss,
)
from ltplab.core.errors import ConfigError, PruningError, TrainingDivergedError

logger = logging.getLogger("ltplab.train")


class Stage(str, Enum):
    PRETRAIN = "pretrain"
    SOFT = "soft"
    HARD = "hard"


@dataclass
class StageConfig:
    stage: Stage = Stage.SOFT
    epochs: int = 1
    lr: float = 1e-3
    temperature: float | None = DEFAULT_TEMPERATURE
    lam: float = 0.01
    batch_size: int = 16
    seed: int = 0
    threshold_lr: float | None = None
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    betas: tuple[float, float] = DEFAULT_BETAS
    eps: float = DEFAULT_EPS

    def __post_init__(self) -> None:
        self.stage = Stage(self.stage)
        self.betas = tuple(self.betas)

    def validate(self) -> None:
        if self.lam < 0:
            raise ConfigError(f"{self.stage.value}: lambda must be >= 0, got {self.lam}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError(f"{self.stage.value}: epochs must be >= 0 and batch_size >= 1")
        if self.stage == Stage.SOFT and (self.temperature is None or self.temperature <= 0):
            raise ConfigError("soft stage requires a positive temperature")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["stage"] = self.stage.value
        data["lambda"] = data.pop("lam")
        return data


@dataclass
class EpochRecord:
    stage: str
    epoch: int
    loss: float
    task_loss: float
    reg_loss: float
    metric: float
    mean_retained: list[float]
    relative_flops: float
    thresholds: list[float] | None = None


@dataclass
class TrainReport:
    stage: str
    records: list[EpochRecord] = field(default_factory=list)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(asdict(r)) + "\n" for r in self.records)

    @classmethod
    def from_jsonl(cls, text: str) -> "TrainReport":
        records = [EpochRecord(**json.loads(line)) for line in text.splitlines() if line.strip()]
        return cls(stage=records[0].stage if records else "", records=records)

    @property
    def final(self) -> EpochRecord | None:
        return self.records[-1] if self.records else None


@dataclass
class TraceSummary:
    mean_retained: list[float]
    mean_lengths: list[float]
    trajectories: list[list[int]]
    retained_histograms: list[dict[str, dict[str, int]]]
    nesting_violations: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EvalResult:
    count: int
    accuracy: float | None
    flops: FlopsReport | None
    summary: TraceSummary | None

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "accuracy": self.accuracy,
            "flops": self.flops.to_dict() if self.flops else None,
            "summary": self.summary.to_dict() if self.summary else None,
        }


# ----------------------------------
# Threshold lifecycle
# ----------------------------------

def init_thresholds(theta_final: float, num_layers: int,
                    temperature: float = DEFAULT_TEMPERATURE) -> ThresholdSet:
    """Linearly rising learnable thresholds ending at ``theta_final``."""
    if theta_final < 0:
        raise PruningError(f"initial final threshold must be >= 0, got {theta_final}")
    values = [theta_final * layer / num_layers for layer in range(1, num_layers + 1)]
    return ThresholdSet(values, temperature, learnable=True)


def binarize_and_fix(thresholds: ThresholdSet) -> PruneContext:
    thresholds.freeze()
    return PruneContext(mode=PruneMode.HARD, thresholds=thresholds)


# ----------------------------------
# Loops
# ----------------------------------

def _nested(trace: PruneTrace) -> bool:
    sets = trace.retained_sets()
    return all(later <= earlier for earlier, later in zip(sets, sets[1:]))


def _run_epochs(
    model: EncoderModel,
    ctx: PruneContext,
    data: Sequence[Example],
    cfg: StageConfig,
    optimizers: list[Adam],
) -> TrainReport:
    cfg.validate()
    report = TrainReport(stage=cfg.stage.value)
    soft = ctx.mode == PruneMode.SOFT
    num_layers = model.config.num_layers

    for epoch in range(cfg.epochs):
        rng = np.random.default_rng(cfg.seed + epoch)
        order = rng.permutation(len(data))
        sums = {"loss": 0.0, "task": 0.0, "reg": 0.0}
        correct = 0
        retained = np.zeros(num_layers)
        flops_reports = []

        for start in range(0, len(order), cfg.batch_size):
            batch = [data[i] for i in order[start:start + cfg.batch_size]]
            for opt in optimizers:
                opt.zero_grad()

            task_total, reg_total = None, None
            for example in batch:
                logits, result = model.forward(example.tokens, ctx)
                task = cross_entropy(logits, example.label)
                task_total = task if task_total is None else task_total + task
                if soft:
                    reg = reg_loss(result.trace.mask_tensors, result.trace.pad)
                    reg_total = reg if reg_total is None else reg_total + reg

                correct += int(np.argmax(logits.data) == example.label)
                retained += np.asarray(result.trace.retained_counts, dtype=np.float64)
                flops_reports.append(model_flops(result.trace.lengths, model.config))

            scale = 1.0 / len(batch)
            task_mean = task_total * scale
            loss = task_mean
            reg_value = 0.0
            if soft:
                reg_mean = reg_total * scale
                loss = task_mean + reg_mean * cfg.lam
                reg_value = reg_mean.item()

            value = loss.item()
            if not math.isfinite(value):
                logger.error(f"Non-finite loss | stage={cfg.stage.value} | epoch={epoch}")
                raise TrainingDivergedError(f"{cfg.stage.value} stage diverged at epoch {epoch}", report)

            backward(loss)
            for opt in optimizers:
                opt.step()

            sums["loss"] += value * len(batch)
            sums["task"] += task_mean.item() * len(batch)
            sums["reg"] += reg_value * len(batch)

        count = max(1, len(data))
        record = EpochRecord(
            stage=cfg.stage.value,
            epoch=epoch,
            loss=sums["loss"] / count,
            task_loss=sums["task"] / count,
            reg_loss=sums["reg"] / count,
            metric=correct / count,
            mean_retained=(retained / count).tolist(),
            relative_flops=average_reports(flops_reports).relative if flops_reports else 1.0,
            thresholds=ctx.thresholds.to_list() if ctx.thresholds is not None else None,
        )
        report.records.append(record)
        logger.info(
            f"Epoch done | stage={record.stage} | epoch={epoch} | loss={record.loss:.4f} "
            f"| acc={record.metric:.4f} | rel_flops={record.relative_flops:.4f}"
        )

    return report


def _model_optimizer(model: EncoderModel, cfg: StageConfig) -> Adam:
    return Adam(model.parameters(), lr=cfg.lr, betas=cfg.betas, eps=cfg.eps,
                weight_decay=cfg.weight_decay)


def pretrain(model: EncoderModel, data: Sequence[Example], cfg: StageConfig) -> TrainReport:
    """Fine-tunes without pruning."""
    return _run_epochs(model, PruneContext(), data, cfg, [_model_optimizer(model, cfg)])


def train_soft(model: EncoderModel, thresholds: ThresholdSet, data: Sequence[Example],
               cfg: StageConfig) -> TrainReport:
    """Jointly trains parameters and thresholds under the soft mask."""
    if cfg.stage != Stage.SOFT:
        raise ConfigError(f"train_soft needs a soft stage config, got '{cfg.stage.value}'")
    if not thresholds.learnable:
        raise PruningError("train_soft: thresholds are frozen")
    if cfg.temperature is not None:
        thresholds.temperature = cfg.temperature

    ctx = PruneContext(mode=PruneMode.SOFT, thresholds=thresholds)
    threshold_opt = Adam([thresholds.theta], lr=cfg.threshold_lr or cfg.lr,
                         betas=cfg.betas, eps=cfg.eps, weight_decay=0.0)
    return _run_epochs(model, ctx, data, cfg, [_model_optimizer(model, cfg), threshold_opt])


def train_hard(model: EncoderModel, ctx: PruneContext, data: Sequence[Example],
               cfg: StageConfig) -> TrainReport:
    """Fine-tunes model parameters only, with tokens physically removed."""
    if ctx.mode not in HARD_MODES:
        raise PruningError(f"train_hard needs a hard-style context, got '{ctx.mode.value}'")
    return _run_epochs(model, ctx, data, cfg, [_model_optimizer(model, cfg)])


def evaluate(model: EncoderModel, ctx: PruneContext, data: Sequence[Example]) -> EvalResult:
    if not data:
        return EvalResult(count=0, accuracy=None, flops=None, summary=None)

    num_layers = model.config.num_layers
    correct = 0
    reports = []
    retained = np.zeros(num_layers)
    lengths = np.zeros(num_layers)
    trajectories = []
    histograms = [{"correct": Counter(), "incorrect": Counter()} for _ in range(num_layers)]
    violations = 0

    with no_grad():
        for example in data:
            logits, result = model.forward(example.tokens, ctx)
            trace = result.trace
            hit = int(np.argmax(logits.data)) == example.label
            correct += int(hit)

            reports.append(model_flops(trace.lengths, model.config))
            retained += np.asarray(trace.retained_counts, dtype=np.float64)
            lengths += np.asarray(trace.lengths, dtype=np.float64)
            trajectories.append(trace.trajectory())
            group = "correct" if hit else "incorrect"
            for layer, count in enumerate(trace.retained_counts):
                histograms[layer][group][str(count)] += 1
            if not _nested(trace):
                violations += 1

    count = len(data)
    summary = TraceSummary(
        mean_retained=(retained / count).tolist(),
        mean_lengths=(lengths / count).tolist(),
        trajectories=trajectories,
        retained_histograms=[{k: dict(v) for k, v in h.items()} for h in histograms],
        nesting_violations=violations,
    )
    return EvalResult(count=count, accuracy=correct / count,
                      flops=average_reports(reports), summary=summary)
