"""
Synthetic variable-length classification tasks and sequence-length statistics.

Vocabulary layout: 0 is padding, 1 the classification token, then
``num_classes * signal_vocab_per_class`` signal ids (class = block index),
then noise ids up to ``vocab_size``. Every sequence starts with the
classification token; its label is the strict majority class of its signal
tokens, which sit at uniformly random positions among noise.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import entropy

from ltplab.controllers.encoder import CLS_ID
from ltplab.core.errors import DataGenError

FIRST_SIGNAL_ID = 2
KL_SMOOTHING = 1e-10


@dataclass
class LengthDistribution:
    family: str = "lognormal"
    mean_log: float = 3.4
    sigma_log: float = 0.45
    components: list[dict] = field(default_factory=list)

    def sample(self, rng: np.random.Generator) -> float:
        if self.family == "lognormal":
            return float(rng.lognormal(self.mean_log, self.sigma_log))
        if self.family == "mixture":
            if not self.components:
                raise DataGenError("mixture length distribution has no components")
            weights = np.array([c.get("weight", 1.0) for c in self.components], dtype=np.float64)
            pick = self.components[int(rng.choice(len(self.components), p=weights / weights.sum()))]
            return float(rng.lognormal(pick["mean_log"], pick["sigma_log"]))
        raise DataGenError(f"unknown length distribution family '{self.family}'")


@dataclass
class TaskSpec:
    vocab_size: int = 128
    num_classes: int = 2
    n_signal: int = 1
    # 0 or None: exactly n_signal per sequence; otherwise round(fraction · (length - 1)), at least n_signal
    signal_fraction: float | None = None
    signal_vocab_per_class: int = 8
    n_max: int = 128
    lengths: LengthDistribution = field(default_factory=LengthDistribution)
    seed: int = 0

    def __post_init__(self) -> None:
        if isinstance(self.lengths, dict):
            self.lengths = LengthDistribution(**self.lengths)

    @property
    def noise_start(self) -> int:
        return FIRST_SIGNAL_ID + self.num_classes * self.signal_vocab_per_class

    def validate(self) -> None:
        if self.n_signal < 1:
            raise DataGenError(f"n_signal must be >= 1, got {self.n_signal}")
        if self.num_classes < 2:
            raise DataGenError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.noise_start >= self.vocab_size:
            raise DataGenError(
                f"vocab_size {self.vocab_size} leaves no noise ids after {self.noise_start} reserved ids"
            )
        if self.n_signal + 1 > self.n_max:
            raise DataGenError(f"n_signal {self.n_signal} does not fit in n_max {self.n_max}")
        if self.signal_fraction is not None and not 0.0 <= self.signal_fraction <= 1.0:
            raise DataGenError(f"signal_fraction must be in [0, 1], got {self.signal_fraction}")

    def signal_class(self, token: int) -> int | None:
        if FIRST_SIGNAL_ID <= token < self.noise_start:
            return (token - FIRST_SIGNAL_ID) // self.signal_vocab_per_class
        return None

    def signal_count(self, length: int) -> int:
        if not self.signal_fraction:
            return self.n_signal
        return min(length - 1, max(self.n_signal, round(self.signal_fraction * (length - 1))))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Example:
    tokens: list[int]
    label: int

    @property
    def length(self) -> int:
        return len(self.tokens)

    def to_dict(self) -> dict:
        return {"tokens": [int(t) for t in self.tokens], "label": int(self.label)}

    @classmethod
    def from_dict(cls, data: dict) -> "Example":
        return cls(tokens=[int(t) for t in data["tokens"]], label=int(data["label"]))


@dataclass
class LengthStats:
    q1: int
    q2: int
    q3: int
    bin_edges: list[float]
    histogram: list[float]
    reference_histogram: list[float] | None = None
    kl: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "LengthStats":
        return cls(**data)


@dataclass
class QuantileSplit:
    short: list[Example]
    mid: list[Example]
    long: list[Example]
    train_short: list[Example]
    q2: int
    q3: int

    def subsets(self) -> dict[str, list[Example]]:
        return {"~Q2": self.short, "Q2~Q3": self.mid, "Q3~": self.long}


# ----------------------------------
# Generation
# ----------------------------------

def generate(spec: TaskSpec, count: int, seed: int | None = None) -> list[Example]:
    spec.validate()
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    min_length = spec.n_signal + 1
    noise_ids = np.arange(spec.noise_start, spec.vocab_size)
    examples = []

    for _ in range(count):
        length = int(round(spec.lengths.sample(rng)))
        length = min(spec.n_max, max(min_length, length))
        n_sig = spec.signal_count(length)

        label = int(rng.integers(spec.num_classes))
        majority = n_sig // 2 + 1
        classes = [label] * majority + [int(c) for c in rng.integers(spec.num_classes, size=n_sig - majority)]

        tokens = rng.choice(noise_ids, size=length)
        tokens[0] = CLS_ID
        positions = rng.choice(np.arange(1, length), size=n_sig, replace=False)
        for position, cls in zip(positions, classes):
            offset = int(rng.integers(spec.signal_vocab_per_class))
            tokens[position] = FIRST_SIGNAL_ID + cls * spec.signal_vocab_per_class + offset

        examples.append(Example(tokens=[int(t) for t in tokens], label=label))
    return examples


def oracle_label(tokens: Sequence[int], spec: TaskSpec) -> int:
    """Majority class of the signal tokens; noise is ignored."""
    votes = Counter(c for c in (spec.signal_class(t) for t in tokens) if c is not None)
    if not votes:
        raise DataGenError("sequence has no signal tokens")
    return votes.most_common(1)[0][0]


# ----------------------------------
# Length statistics
# ----------------------------------

def nearest_rank(sorted_values: Sequence[int], p: float) -> int:
    index = max(0, math.ceil(p * len(sorted_values)) - 1)
    return int(sorted_values[index])


def _smoothed(hist: np.ndarray) -> np.ndarray:
    hist = np.where(hist == 0, KL_SMOOTHING, hist)
    return hist / hist.sum()


def length_stats(lengths: Sequence[int], bins: int = 20,
                 reference: Sequence[int] | None = None) -> LengthStats:
    """
    Nearest-rank quartiles plus an equal-width histogram over the union range
    of ``lengths`` and ``reference``; KL(lengths || reference) when a
    reference is given.
    """
    if len(lengths) == 0:
        raise DataGenError("length_stats: no lengths")
    if bins < 2:
        raise DataGenError(f"length_stats: need at least 2 bins, got {bins}")

    values = np.sort(np.asarray(lengths, dtype=np.float64))
    pooled = values if reference is None else np.concatenate([values, np.asarray(reference, dtype=np.float64)])
    lo, hi = float(pooled.min()), float(pooled.max())
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)

    counts = np.histogram(values, bins=edges)[0].astype(np.float64)
    histogram = counts / counts.sum()

    ref_hist, kl = None, None
    if reference is not None and len(reference) > 0:
        ref_counts = np.histogram(np.asarray(reference, dtype=np.float64), bins=edges)[0].astype(np.float64)
        ref_hist = ref_counts / ref_counts.sum()
        kl = float(entropy(_smoothed(histogram), _smoothed(ref_hist)))

    return LengthStats(
        q1=nearest_rank(values, 0.25),
        q2=nearest_rank(values, 0.5),
        q3=nearest_rank(values, 0.75),
        bin_edges=edges.tolist(),
        histogram=histogram.tolist(),
        reference_histogram=ref_hist.tolist() if ref_hist is not None else None,
        kl=kl,
    )


def quantile_split(dataset: Sequence[Example], train: Sequence[Example] | None = None) -> QuantileSplit:
    """Splits at the evaluation median and third quartile (boundaries go short)."""
    if not dataset:
        raise DataGenError("quantile_split: empty dataset")
    stats = length_stats([e.length for e in dataset])
    q2, q3 = stats.q2, stats.q3

    return QuantileSplit(
        short=[e for e in dataset if e.length <= q2],
        mid=[e for e in dataset if q2 < e.length <= q3],
        long=[e for e in dataset if e.length > q3],
        train_short=[e for e in (train or []) if e.length <= q2],
        q2=q2,
        q3=q3,
    )


# ----------------------------------
# Dataset build
# ----------------------------------

class DatasetBuilder:
    """
    Builds the train and evaluation splits of one task plus their length
    statistics. The evaluation split uses ``spec.seed + eval_seed_offset``.
    """

    def __init__(self, spec: TaskSpec, train_size: int, eval_size: int, eval_seed_offset: int = 1):
        self.spec = spec
        self.train_size = train_size
        self.eval_size = eval_size
        self.eval_seed_offset = eval_seed_offset

        self.train: list[Example] = []
        self.evaluation: list[Example] = []
        self.stats: dict = {}

    def _validate(self) -> None:
        if self.train_size < 1 or self.eval_size < 1:
            raise DataGenError(f"split sizes must be >= 1, got train={self.train_size} eval={self.eval_size}")
        if self.eval_seed_offset == 0:
            raise DataGenError("eval_seed_offset 0 would make the evaluation split repeat the training split")

    def process(self) -> dict:
        self._validate()
        self.train = generate(self.spec, self.train_size, seed=self.spec.seed)
        self.evaluation = generate(self.spec, self.eval_size, seed=self.spec.seed + self.eval_seed_offset)

        train_lengths = [e.length for e in self.train]
        self.stats = {
            "train": length_stats(train_lengths).to_dict(),
            "eval": length_stats([e.length for e in self.evaluation], reference=train_lengths).to_dict(),
            "task": self.spec.to_dict(),
        }
        return self.stats
