"""
Wall-clock comparison of threshold selection against top-k selection over
batches of importance scores.

For each (length, retain ratio) cell the threshold is placed halfway between
the k-th and (k+1)-th largest score of each row, so both kernels must return
the same keep set. Top-k runs two ways (full sort and partition) and the
faster one is reported as ``topk``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ltplab.controllers.error_validator import ErrorValidator
from ltplab.core.errors import ConfigError

CSV_HEADER = ["length", "ratio", "method", "mean_ns", "std_ns", "slowdown"]
RESOLUTION_FACTOR = 10


@dataclass
class BenchConfig:
    lengths: list[int] = field(default_factory=lambda: [128, 256, 512, 1024])
    ratios: list[float] = field(default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5])
    batch_size: int = 32
    repetitions: int = 1000
    warmup: int = 10
    seed: int = 0

    def validate(self) -> None:
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        for ratio in self.ratios:
            if not 0.0 < ratio <= 1.0:
                raise ConfigError(f"retain ratio {ratio} outside (0, 1]")


@dataclass
class Timing:
    mean_ns: float
    std_ns: float
    min_ns: float
    median_ns: float
    samples: list[int] = field(default_factory=list)

    @classmethod
    def from_samples(cls, samples: list[int]) -> "Timing":
        return cls(
            mean_ns=statistics.fmean(samples),
            std_ns=statistics.pstdev(samples),
            min_ns=float(min(samples)),
            median_ns=float(statistics.median(samples)),
            samples=list(samples),
        )


@dataclass
class BenchCell:
    length: int
    ratio: float
    k: int
    threshold: Timing
    topk: Timing
    topk_method: str
    sets_match: bool
    comparisons: int

    @property
    def slowdown(self) -> float:
        return self.topk.mean_ns / max(self.threshold.mean_ns, 1.0)


@dataclass
class BenchResult:
    cells: list[BenchCell] = field(default_factory=list)
    timer_resolution_ns: float = 0.0
    warnings: list[str] = field(default_factory=list)

    @property
    def all_match(self) -> bool:
        return all(cell.sets_match for cell in self.cells)


class ComparisonCounter:
    def __init__(self) -> None:
        self.count = 0


# ----------------------------------
# Kernels
# ----------------------------------

def threshold_select(scores: np.ndarray, theta: np.ndarray,
                     counter: ComparisonCounter | None = None) -> np.ndarray:
    """One comparison per score, no ordering work."""
    if counter is not None:
        counter.count += scores.size
    return scores > theta[:, None]


def sort_select(scores: np.ndarray, k: int) -> np.ndarray:
    order = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    keep = np.zeros(scores.shape, dtype=bool)
    np.put_along_axis(keep, order, True, axis=1)
    return keep


def partition_select(scores: np.ndarray, k: int) -> np.ndarray:
    keep = np.zeros(scores.shape, dtype=bool)
    if k == scores.shape[1]:
        keep[:] = True
        return keep
    top = np.argpartition(-scores, k - 1, axis=1)[:, :k]
    np.put_along_axis(keep, top, True, axis=1)
    return keep


def midpoint_thresholds(scores: np.ndarray, k: int) -> np.ndarray:
    """Per-row threshold between the k-th and (k+1)-th largest score."""
    ordered = -np.sort(-scores, axis=1)
    kth = ordered[:, k - 1]
    if k == scores.shape[1]:
        return kth - 1.0
    return (kth + ordered[:, k]) / 2.0


def _time(fn, repetitions: int, warmup: int) -> list[int]:
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(repetitions):
        start = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - start)
    return samples


# ----------------------------------
# Harness
# ----------------------------------

class BenchController:
    """Runs the latency grid for one BenchConfig and renders its report."""

    def __init__(self, cfg: BenchConfig):
        self.cfg = cfg
        self.validator = ErrorValidator()
        self.resolution_ns = time.get_clock_info("perf_counter").resolution * 1e9
        self.result = BenchResult(timer_resolution_ns=self.resolution_ns)

    def _timing(self, fn) -> Timing:
        return Timing.from_samples(_time(fn, self.cfg.repetitions, self.cfg.warmup))

    def _measure(self, scores: np.ndarray, length: int, ratio: float) -> BenchCell:
        k = max(1, min(length, math.ceil(ratio * length - 1e-9)))
        theta = midpoint_thresholds(scores, k)

        counter = ComparisonCounter()
        by_threshold = threshold_select(scores, theta, counter)
        by_sort = sort_select(scores, k)
        by_partition = partition_select(scores, k)
        sets_match = (
            bool(np.array_equal(by_threshold, by_sort))
            and bool(np.array_equal(by_threshold, by_partition))
            and bool((by_threshold.sum(axis=1) == k).all())
        )

        threshold_timing = self._timing(lambda: threshold_select(scores, theta))
        sort_timing = self._timing(lambda: sort_select(scores, k))
        partition_timing = self._timing(lambda: partition_select(scores, k))

        if partition_timing.mean_ns <= sort_timing.mean_ns:
            topk_timing, topk_method = partition_timing, "partition"
        else:
            topk_timing, topk_method = sort_timing, "sort"

        if threshold_timing.median_ns < RESOLUTION_FACTOR * self.resolution_ns:
            self.validator.warn(
                f"length={length} ratio={ratio}: median latency "
                f"{threshold_timing.median_ns:.0f}ns is close to timer resolution {self.resolution_ns:.0f}ns"
            )

        return BenchCell(
            length=length,
            ratio=ratio,
            k=k,
            threshold=threshold_timing,
            topk=topk_timing,
            topk_method=topk_method,
            sets_match=sets_match,
            comparisons=counter.count,
        )

    def process(self) -> BenchResult:
        self.cfg.validate()
        rng = np.random.default_rng(self.cfg.seed)
        self.validator = ErrorValidator()
        self.result = BenchResult(timer_resolution_ns=self.resolution_ns)

        for length in self.cfg.lengths:
            scores = rng.random((self.cfg.batch_size, length))
            scores /= scores.sum(axis=1, keepdims=True)
            for ratio in self.cfg.ratios:
                self.result.cells.append(self._measure(scores, length, ratio))

        self.result.warnings = self.validator.get_warnings()
        return self.result

    def report(self, fmt: str = "csv") -> str:
        result = self.result
        if fmt == "json":
            return json.dumps({
                "timer_resolution_ns": result.timer_resolution_ns,
                "warnings": result.warnings,
                "cells": [asdict(cell) | {"slowdown": cell.slowdown} for cell in result.cells],
            }, indent=2)
        if fmt != "csv":
            raise ConfigError(f"unknown report format '{fmt}'")

        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for cell in result.cells:
            for method, timing in (("threshold", cell.threshold), ("topk", cell.topk)):
                writer.writerow([cell.length, cell.ratio, method,
                                 f"{timing.mean_ns:.1f}", f"{timing.std_ns:.1f}", f"{cell.slowdown:.4f}"])
        return buffer.getvalue()
