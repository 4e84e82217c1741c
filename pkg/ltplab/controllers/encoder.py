"""
Transformer encoder over column-major activations (d x n), with the pruning
hook between layers.

Per layer: x_MHA = LN(Att(x) + x), x_out = LN(FFN(x_MHA) + x_MHA) with
FFN(x) = gelu(W_2 (W_1 x + b_1)) + b_2. Attention logits are scaled by
1/sqrt(d). The pruning decision for layer l is taken from that layer's
attention probabilities and applied to its output, so removed tokens stop
participating from layer l+1 on.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ltplab.controllers.autodiff import (
    Tensor,
    gelu,
    layer_norm,
    matmul,
    reshape,
    softmax,
    take,
    transpose,
    tsum,
)
from ltplab.controllers.pruning import PruneContext, Pruner, PruneTrace, compact, importance_scores
from ltplab.core.errors import EncoderError

PAD_ID = 0
CLS_ID = 1
MASKED_LOGIT = -1e30


@dataclass
class ModelConfig:
    num_layers: int = 4
    num_heads: int = 4
    d_model: int = 64
    d_head: int | None = None
    d_ffn: int = 256
    vocab_size: int = 128
    n_max: int = 128
    num_classes: int = 2

    def __post_init__(self) -> None:
        if self.d_head is None:
            self.d_head = self.d_model // max(1, self.num_heads)
        for name, value in asdict(self).items():
            if value < 1:
                raise EncoderError(f"model config '{name}' must be >= 1, got {value}")
        if self.d_model != self.num_heads * self.d_head:
            raise EncoderError(
                f"d_model ({self.d_model}) must equal num_heads * d_head "
                f"({self.num_heads} * {self.d_head})"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)


@dataclass
class AttentionRecord:
    probs: list[Tensor] = field(default_factory=list)
    layer_inputs: list[Tensor] = field(default_factory=list)


@dataclass
class EncodeResult:
    hidden: Tensor
    index_map: np.ndarray
    activations: list[Tensor]
    record: AttentionRecord
    trace: PruneTrace


class EncoderModel:
    """Encoder parameters plus a classifier over the first position."""

    def __init__(self, config: ModelConfig, seed: int = 0) -> None:
        self.config = config
        self.params: dict[str, Tensor] = {}
        self._init_params(np.random.default_rng(seed))

    def _init_params(self, rng: np.random.Generator) -> None:
        cfg = self.config
        d, h, dh, f = cfg.d_model, cfg.num_heads, cfg.d_head, cfg.d_ffn

        def normal(name, shape, std):
            self.params[name] = Tensor(rng.normal(0.0, std, size=shape), requires_grad=True, name=name)

        def const(name, shape, value):
            self.params[name] = Tensor(np.full(shape, value), requires_grad=True, name=name)

        normal("embed.tokens", (cfg.vocab_size, d), 0.02 * math.sqrt(d))
        normal("embed.positions", (cfg.n_max, d), 0.02 * math.sqrt(d))
        for l in range(cfg.num_layers):
            p = f"layers.{l}"
            normal(f"{p}.w_q", (h, dh, d), d ** -0.5)
            normal(f"{p}.w_k", (h, dh, d), d ** -0.5)
            normal(f"{p}.w_v", (h, dh, d), d ** -0.5)
            normal(f"{p}.w_o", (h, d, dh), d ** -0.5)
            const(f"{p}.ln1.gamma", (d, 1), 1.0)
            const(f"{p}.ln1.beta", (d, 1), 0.0)
            normal(f"{p}.w_1", (f, d), d ** -0.5)
            const(f"{p}.b_1", (f, 1), 0.0)
            normal(f"{p}.w_2", (d, f), f ** -0.5)
            const(f"{p}.b_2", (d, 1), 0.0)
            const(f"{p}.ln2.gamma", (d, 1), 1.0)
            const(f"{p}.ln2.beta", (d, 1), 0.0)
        normal("classifier.weight", (cfg.num_classes, d), d ** -0.5)
        const("classifier.bias", (cfg.num_classes, 1), 0.0)

    # ----------------------------------
    # Parameter access
    # ----------------------------------

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        if missing:
            raise EncoderError(f"state is missing parameters: {sorted(missing)}")
        for name, tensor in self.params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != tensor.shape:
                raise EncoderError(f"parameter '{name}' expects shape {tensor.shape}, got {value.shape}")
            tensor.data = value.copy()

    def clone(self) -> "EncoderModel":
        other = EncoderModel(self.config)
        other.load_state_dict(self.state_dict())
        return other

    def _layer(self, layer: int, name: str) -> Tensor:
        return self.params[f"layers.{layer}.{name}"]

    # ----------------------------------
    # Blocks
    # ----------------------------------

    def embed(self, token_ids: np.ndarray) -> Tensor:
        tokens = take(self.params["embed.tokens"], token_ids, axis=0)
        positions = take(self.params["embed.positions"], np.arange(token_ids.size), axis=0)
        return transpose(tokens + positions)

    def mha_forward(self, x: Tensor, layer: int, key_mask) -> tuple[Tensor, Tensor]:
        d, n = x.shape
        key_mask = np.asarray(key_mask, dtype=bool).reshape(-1)
        if key_mask.size != n:
            raise EncoderError(f"mha_forward: key mask has {key_mask.size} entries for {n} tokens")
        if not key_mask.any():
            raise EncoderError("mha_forward: every key is masked, softmax is undefined")

        q = matmul(self._layer(layer, "w_q"), x)
        k = matmul(self._layer(layer, "w_k"), x)
        v = matmul(self._layer(layer, "w_v"), x)

        logits = matmul(transpose(q, (0, 2, 1)), k) * (1.0 / math.sqrt(self.config.d_model))
        if not key_mask.all():
            logits = logits + np.where(key_mask, 0.0, MASKED_LOGIT).reshape(1, 1, n)
        probs = softmax(logits, axis=-1)

        context = matmul(v, transpose(probs, (0, 2, 1)))
        attended = tsum(matmul(self._layer(layer, "w_o"), context), axis=0)
        out = layer_norm(attended + x, self._layer(layer, "ln1.gamma"), self._layer(layer, "ln1.beta"))
        return out, probs

    def ffn_forward(self, x_mha: Tensor, layer: int) -> Tensor:
        hidden = matmul(self._layer(layer, "w_1"), x_mha) + self._layer(layer, "b_1")
        ffn = gelu(matmul(self._layer(layer, "w_2"), hidden)) + self._layer(layer, "b_2")
        return layer_norm(ffn + x_mha, self._layer(layer, "ln2.gamma"), self._layer(layer, "ln2.beta"))

    # ----------------------------------
    # Full pass
    # ----------------------------------

    def encode(self, token_ids, ctx: PruneContext | None = None) -> EncodeResult:
        ctx = ctx or PruneContext()
        ctx.validate(self.config.num_layers)
        ids = np.asarray(token_ids, dtype=np.int64).reshape(-1)
        if ids.size == 0:
            raise EncoderError("encode: empty sequence")
        if ids.size > self.config.n_max:
            raise EncoderError(f"encode: sequence length {ids.size} exceeds n_max {self.config.n_max}")

        pad = ids == PAD_ID
        if not (~pad).any():
            raise EncoderError("encode: sequence contains only padding")
        pruner = Pruner(ctx, pad)

        x = self.embed(ids)
        index_map = np.arange(ids.size)
        key_mask = ~pad
        if pruner.hard and pad.any():
            x, index_map = compact(x, ~pad)
            key_mask = np.ones(index_map.size, dtype=bool)

        record = AttentionRecord()
        activations: list[Tensor] = []

        for layer in range(self.config.num_layers):
            record.layer_inputs.append(x)

            x_mha, probs = self.mha_forward(x, layer, key_mask)
            x_out = self.ffn_forward(x_mha, layer)
            record.probs.append(probs)

            scores = importance_scores(probs, key_mask)
            x_out, index_map, key_mask = pruner.step(layer, x_out, scores, index_map, key_mask)
            activations.append(x_out)
            x = x_out

        return EncodeResult(hidden=x, index_map=index_map, activations=activations,
                            record=record, trace=pruner.trace)

    def classify(self, encoded: Tensor, index_map=None) -> Tensor:
        if index_map is not None and (len(index_map) == 0 or int(index_map[0]) != 0):
            raise EncoderError("classify: the first position was pruned")
        first = take(encoded, [0], axis=1)
        logits = matmul(self.params["classifier.weight"], first) + self.params["classifier.bias"]
        return reshape(logits, (self.config.num_classes,))

    def forward(self, token_ids, ctx: PruneContext | None = None) -> tuple[Tensor, EncodeResult]:
        result = self.encode(token_ids, ctx)
        return self.classify(result.hidden, result.index_map), result
