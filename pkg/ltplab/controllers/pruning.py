"""
Token importance, threshold masks and baseline pruning schedules.

Scores follow the column-mean rule: a token's importance at a layer is the
attention probability it receives, averaged over heads and over the active
query tokens. Hard pruning keeps a token iff its score is strictly above the
layer threshold; soft pruning replaces the comparison with
sigmoid((s - theta) / T).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from ltplab.controllers.autodiff import (
    Tensor,
    as_tensor,
    l1_norm,
    mul,
    reshape,
    sigmoid,
    take,
    tsum,
)
from ltplab.core.errors import PruningError

# Usual search range for T is {1, 2, 5, 10, 20}e-4.
DEFAULT_TEMPERATURE = 1e-3
SPATTEN_DENSE_LAYERS = 3


class PruneMode(str, Enum):
    NONE = "none"
    SOFT = "soft"
    HARD = "hard"
    TOPK = "topk"
    SPATTEN = "spatten"
    MANUAL = "manual"


THRESHOLD_MODES = {PruneMode.SOFT, PruneMode.HARD, PruneMode.MANUAL}
SCHEDULE_MODES = {PruneMode.TOPK, PruneMode.SPATTEN}
HARD_MODES = {PruneMode.HARD, PruneMode.MANUAL, PruneMode.TOPK, PruneMode.SPATTEN}


class ThresholdSet:
    """Per-layer thresholds theta^(l) with the soft-mask temperature."""

    def __init__(self, theta: Sequence[float], temperature: float = DEFAULT_TEMPERATURE,
                 learnable: bool = True) -> None:
        if not temperature > 0:
            raise PruningError(f"temperature must be positive, got {temperature}")
        values = np.asarray(theta, dtype=np.float64).reshape(-1)
        if values.size == 0:
            raise PruningError("threshold set needs at least one layer")
        self.theta = Tensor(values, requires_grad=learnable, name="thresholds")
        self.temperature = float(temperature)
        self.learnable = learnable

    def __len__(self) -> int:
        return self.theta.size

    @property
    def values(self) -> np.ndarray:
        return self.theta.data.copy()

    def layer(self, index: int) -> Tensor:
        return take(self.theta, [index], axis=0)

    def freeze(self) -> None:
        self.learnable = False
        self.theta.requires_grad = False
        self.theta.grad = None

    def to_list(self) -> list[float]:
        return [float(v) for v in self.theta.data]

    def to_dict(self) -> dict:
        return {"theta": self.to_list(), "temperature": self.temperature, "learnable": self.learnable}

    @classmethod
    def from_dict(cls, data: dict) -> "ThresholdSet":
        return cls(data["theta"], data.get("temperature", DEFAULT_TEMPERATURE),
                   data.get("learnable", False))


@dataclass
class PruneContext:
    mode: PruneMode = PruneMode.NONE
    thresholds: ThresholdSet | None = None
    schedule: list[float] | None = None
    counts: list[int] | None = None
    protected: frozenset[int] = frozenset({0})

    def __post_init__(self) -> None:
        self.mode = PruneMode(self.mode)
        self.protected = frozenset(self.protected)
        if self.mode in THRESHOLD_MODES and self.thresholds is None:
            raise PruningError(f"mode '{self.mode.value}' requires thresholds")
        if self.mode in SCHEDULE_MODES and self.schedule is None and self.counts is None:
            raise PruningError(f"mode '{self.mode.value}' requires a retain schedule")
        if self.mode == PruneMode.SPATTEN and self.schedule is None:
            raise PruningError("mode 'spatten' requires retain ratios")
        if self.schedule is not None:
            for ratio in self.schedule:
                if not 0.0 <= ratio <= 1.0:
                    raise PruningError(f"retain ratio {ratio} outside [0, 1]")
        if self.counts is not None and any(c < 1 for c in self.counts):
            raise PruningError(f"fixed keep counts must be >= 1, got {self.counts}")

    def validate(self, num_layers: int) -> None:
        if self.thresholds is not None and self.mode in THRESHOLD_MODES and len(self.thresholds) != num_layers:
            raise PruningError(f"expected {num_layers} thresholds, got {len(self.thresholds)}")
        if self.mode in SCHEDULE_MODES:
            size = len(self.counts) if self.counts is not None else len(self.schedule)
            if size != num_layers:
                raise PruningError(f"expected a {num_layers}-layer schedule, got {size}")

    def keep_count(self, layer: int, n: int, current: int) -> int:
        """Tokens to keep after ``layer`` for a sequence of original length ``n``."""
        if self.counts is not None:
            k = self.counts[layer]
        else:
            k = schedule_counts([self.schedule[layer]], n)[0]
        return max(1, min(current, k))


@dataclass
class LayerTrace:
    scores: np.ndarray
    mask: np.ndarray
    retained: np.ndarray
    running: np.ndarray | None = None


@dataclass
class PruneTrace:
    """Per-layer pruning record for a single sequence, on original positions."""

    n: int
    pad: np.ndarray
    layers: list[LayerTrace] = field(default_factory=list)
    mask_tensors: list[Tensor] = field(default_factory=list)

    @property
    def retained_counts(self) -> list[int]:
        return [int(layer.retained.size) for layer in self.layers]

    @property
    def lengths(self) -> list[int]:
        """Tokens entering each layer under the binarized decisions."""
        return [self.n] + self.retained_counts[:-1]

    def trajectory(self) -> list[int]:
        return [self.n] + self.retained_counts

    def retained_sets(self) -> list[set[int]]:
        return [set(int(i) for i in layer.retained) for layer in self.layers]


# ----------------------------------
# Scores and masks
# ----------------------------------

def importance_scores(attn, active) -> Tensor:
    """
    Column mean of the attention probabilities over heads and active queries.

    ``attn`` has shape (N_h, n, n) with rows indexing queries. Inactive tokens
    score exactly 0; active scores sum to 1 when rows are normalized over
    active keys.
    """
    attn = as_tensor(attn)
    active = np.asarray(active, dtype=bool).reshape(-1)
    if attn.data.ndim != 3 or attn.shape[1] != attn.shape[2] or attn.shape[2] != active.size:
        raise PruningError(f"importance_scores: attention shape {attn.shape} does not match {active.size} tokens")
    n_active = int(active.sum())
    if n_active == 0:
        raise PruningError("importance_scores: no active tokens")

    weights = active.astype(np.float64)
    received = tsum(mul(attn, weights.reshape(1, -1, 1)), axis=(0, 1))
    return mul(received, weights / (attn.shape[0] * n_active))


def hard_mask(scores, theta_l: float, protected: Sequence[int] = ()) -> np.ndarray:
    scores = scores.data if isinstance(scores, Tensor) else np.asarray(scores, dtype=np.float64)
    keep = scores > theta_l
    for index in protected:
        if 0 <= index < keep.size:
            keep[index] = True
    return keep


def soft_mask(scores, theta_l, temperature: float) -> Tensor:
    if not temperature > 0:
        raise PruningError(f"soft_mask: temperature must be positive, got {temperature}")
    return sigmoid((as_tensor(scores) - theta_l) * (1.0 / temperature))


def protect_soft(mask: Tensor, protected: Sequence[int]) -> Tensor:
    """Pins protected positions of a soft mask to exactly 1."""
    fixed = np.zeros(mask.shape, dtype=np.float64)
    for index in protected:
        if 0 <= index < fixed.size:
            fixed[index] = 1.0
    return mask * (1.0 - fixed) + fixed


def apply_soft_mask(layer_out, mask, running) -> tuple[Tensor, Tensor]:
    """Scales output columns by the running mask product."""
    updated = mul(running, mask)
    return mul(layer_out, reshape(updated, (1, -1))), updated


def compact(x, keep, index_map=None) -> tuple[Tensor, np.ndarray]:
    keep = np.asarray(keep, dtype=bool).reshape(-1)
    retained = np.flatnonzero(keep)
    if retained.size == 0:
        raise PruningError("compact: no tokens retained")
    mapping = retained if index_map is None else np.asarray(index_map)[retained]
    return take(as_tensor(x), retained, axis=1), mapping


def reg_loss(masks: Sequence[Tensor], pad=None) -> Tensor:
    """(1/L) · sum over layers of the L1 norm of the soft mask on non-pad tokens."""
    if not masks:
        raise PruningError("reg_loss: at least one layer mask is required")
    total = None
    for mask in masks:
        weights = np.ones(mask.shape) if pad is None else (~np.asarray(pad, dtype=bool)).astype(np.float64)
        term = l1_norm(mul(mask, weights))
        total = term if total is None else total + term
    return total * (1.0 / len(masks))


# ----------------------------------
# Threshold and schedule builders
# ----------------------------------

def manual_thresholds(theta_final: float, num_layers: int,
                      temperature: float = DEFAULT_TEMPERATURE) -> ThresholdSet:
    """Linearly rising thresholds theta^(l) = theta_final · l / L."""
    if theta_final < 0:
        raise PruningError(f"final threshold must be non-negative, got {theta_final}")
    values = [theta_final * layer / num_layers for layer in range(1, num_layers + 1)]
    return ThresholdSet(values, temperature, learnable=False)


def spatten_schedule(final_ratio: float, num_layers: int) -> list[float]:
    """
    Dense first three layers, then a linear decay of the retain ratio reaching
    ``final_ratio`` at the last layer. Non-positive ratios clamp to 0 and
    prune everything but the protected token at application time.
    """
    if num_layers <= SPATTEN_DENSE_LAYERS:
        raise PruningError(f"spatten schedule needs more than {SPATTEN_DENSE_LAYERS} layers, got {num_layers}")
    if not -1.0 <= final_ratio <= 1.0:
        raise PruningError(f"final retain ratio {final_ratio} outside [-1, 1]")

    ratios = []
    span = num_layers - SPATTEN_DENSE_LAYERS
    for layer in range(1, num_layers + 1):
        if layer <= SPATTEN_DENSE_LAYERS:
            ratios.append(1.0)
            continue
        ratio = 1.0 + (final_ratio - 1.0) * (layer - SPATTEN_DENSE_LAYERS) / span
        ratios.append(min(1.0, max(0.0, ratio)))
    return ratios


def schedule_counts(ratios: Sequence[float], n: int) -> list[int]:
    """ceil(ratio · n) clamped to [1, n]."""
    return [min(n, max(1, math.ceil(ratio * n - 1e-9))) for ratio in ratios]


def topk_select(scores, k: int) -> np.ndarray:
    scores = scores.data if isinstance(scores, Tensor) else np.asarray(scores, dtype=np.float64)
    n = scores.size
    if not 1 <= k <= n:
        raise PruningError(f"topk_select: k={k} outside [1, {n}]")
    order = np.argsort(-scores, kind="stable")
    keep = np.zeros(n, dtype=bool)
    keep[order[:k]] = True
    return keep


# ----------------------------------
# Per-layer driver
# ----------------------------------

class Pruner:
    """
    Applies one PruneContext to a single sequence, layer by layer.

    Soft mode keeps every position and scales it by the running mask
    product; hard modes compact the activations to the kept tokens.
    """

    def __init__(self, ctx: PruneContext, pad: np.ndarray):
        self.ctx = ctx
        self.pad = np.asarray(pad, dtype=bool)
        self.trace = PruneTrace(n=int((~self.pad).sum()), pad=self.pad)
        self.running = Tensor(np.ones(self.pad.size))

    @property
    def hard(self) -> bool:
        return self.ctx.mode in HARD_MODES

    def _keep(self, layer: int, scores: Tensor, protected: list[int]) -> np.ndarray:
        if self.ctx.mode in (PruneMode.HARD, PruneMode.MANUAL):
            return hard_mask(scores, self.ctx.thresholds.values[layer], protected)
        k = self.ctx.keep_count(layer, self.trace.n, scores.data.size)
        ranked = scores.data.copy()
        ranked[protected] = np.inf
        return topk_select(ranked, k)

    def step(self, layer: int, x_out: Tensor, scores: Tensor,
             index_map: np.ndarray, key_mask: np.ndarray) -> tuple[Tensor, np.ndarray, np.ndarray]:
        """Prunes the output of ``layer``; returns (x_out, index_map, key_mask) for the next layer."""
        size = self.pad.size
        full_scores = np.zeros(size)
        full_scores[index_map] = scores.data
        full_mask = np.zeros(size)
        protected = [i for i, orig in enumerate(index_map) if orig in self.ctx.protected]
        running = None

        if self.ctx.mode == PruneMode.NONE:
            full_mask[index_map[key_mask]] = 1.0
            retained = index_map[key_mask]

        elif self.ctx.mode == PruneMode.SOFT:
            thresholds = self.ctx.thresholds
            mask = soft_mask(scores, thresholds.layer(layer), thresholds.temperature)
            mask = protect_soft(mask, protected)
            x_out, self.running = apply_soft_mask(x_out, mask, self.running)
            self.trace.mask_tensors.append(mask)
            full_mask[:] = mask.data
            running = self.running.data.copy()
            retained = np.flatnonzero((running > 0.5) & ~self.pad)

        else:
            keep = self._keep(layer, scores, protected)
            full_mask[index_map[keep]] = 1.0
            x_out, index_map = compact(x_out, keep, index_map)
            key_mask = np.ones(index_map.size, dtype=bool)
            retained = index_map.copy()

        self.trace.layers.append(LayerTrace(
            scores=full_scores,
            mask=full_mask,
            retained=np.asarray(retained),
            running=running,
        ))
        return x_out, index_map, key_mask
