"""
Analytic FLOPs of the encoder stack for per-layer retained lengths.

One multiply-add counts as 2 FLOPs. Only the matmul terms are modeled:
QKV projections, attention logits, probs x V, output projection and the two
FFN matmuls. Softmax, LayerNorm, GELU, embeddings and the classifier are
left out; they are shared offsets across pruning methods.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass
from typing import Sequence

from ltplab.controllers.encoder import ModelConfig
from ltplab.core.errors import FlopsError

CSV_FIELDS = ["total", "baseline", "relative"]


@dataclass
class FlopsReport:
    per_layer: list[float]
    total: float
    baseline: float

    @property
    def relative(self) -> float:
        return self.total / self.baseline if self.baseline else 1.0

    def to_dict(self) -> dict:
        data = asdict(self)
        data["relative"] = self.relative
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "FlopsReport":
        return cls(per_layer=list(data["per_layer"]), total=data["total"], baseline=data["baseline"])

    def to_csv_row(self) -> str:
        buffer = io.StringIO()
        csv.writer(buffer, lineterminator="\n").writerow([self.total, self.baseline, self.relative])
        return buffer.getvalue()


def attention_terms(n: int, cfg: ModelConfig) -> int:
    """Logits plus probs x V, quadratic in n."""
    return 2 * n * n * cfg.d_model + 2 * n * n * cfg.d_model


def linear_terms(n: int, cfg: ModelConfig) -> int:
    d, f = cfg.d_model, cfg.d_ffn
    qkv = 3 * (2 * n * d * d)
    out_proj = 2 * n * d * d
    ffn = 2 * (2 * n * d * f)
    return qkv + out_proj + ffn


def layer_flops(n_in: int, cfg: ModelConfig) -> int:
    if n_in < 1:
        raise FlopsError(f"layer_flops: retained length must be >= 1, got {n_in}")
    return linear_terms(n_in, cfg) + attention_terms(n_in, cfg)


def model_flops(lengths: Sequence[int], cfg: ModelConfig) -> FlopsReport:
    """FLOPs for the entering length of each layer against the unpruned pass."""
    if len(lengths) != cfg.num_layers:
        raise FlopsError(f"model_flops: expected {cfg.num_layers} lengths, got {len(lengths)}")
    for n in lengths:
        if n > cfg.n_max:
            raise FlopsError(f"model_flops: length {n} exceeds n_max {cfg.n_max}")

    per_layer = [float(layer_flops(int(n), cfg)) for n in lengths]
    baseline = float(layer_flops(int(lengths[0]), cfg) * cfg.num_layers)
    return FlopsReport(per_layer=per_layer, total=sum(per_layer), baseline=baseline)


def average_reports(reports: Sequence[FlopsReport]) -> FlopsReport:
    """Mean per-sequence FLOPs; relative is mean total over mean baseline."""
    if not reports:
        raise FlopsError("average_reports: no reports to average")
    count = len(reports)
    layers = len(reports[0].per_layer)
    per_layer = [sum(r.per_layer[i] for r in reports) / count for i in range(layers)]
    return FlopsReport(
        per_layer=per_layer,
        total=sum(r.total for r in reports) / count,
        baseline=sum(r.baseline for r in reports) / count,
    )
