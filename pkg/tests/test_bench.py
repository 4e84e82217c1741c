import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ltplab.controllers.bench import (
    CSV_HEADER,
    BenchConfig,
    BenchController,
    ComparisonCounter,
    midpoint_thresholds,
    partition_select,
    sort_select,
    threshold_select,
)
from ltplab.core.errors import ConfigError


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 64), st.floats(0.05, 1.0), st.integers(0, 10_000))
def test_kernels_select_identical_sets(length, ratio, seed):
    scores = np.random.default_rng(seed).random((4, length))
    k = max(1, min(length, int(np.ceil(ratio * length))))
    theta = midpoint_thresholds(scores, k)
    by_threshold = threshold_select(scores, theta)
    assert np.array_equal(by_threshold, sort_select(scores, k))
    assert np.array_equal(by_threshold, partition_select(scores, k))
    assert np.all(by_threshold.sum(axis=1) == k)


def test_threshold_kernel_does_one_comparison_per_score():
    counter = ComparisonCounter()
    scores = np.random.default_rng(0).random((3, 50))
    threshold_select(scores, midpoint_thresholds(scores, 10), counter)
    assert counter.count == 150


def test_small_sweep_and_csv_shape():
    cfg = BenchConfig(lengths=[16, 32], ratios=[0.1, 0.5], batch_size=4, repetitions=5, warmup=1)
    controller = BenchController(cfg)
    result = controller.process()
    assert len(result.cells) == 4
    assert result.all_match
    assert all(cell.comparisons == 4 * cell.length for cell in result.cells)
    lines = controller.report("csv").strip().splitlines()
    assert lines[0].split(",") == CSV_HEADER
    assert len(lines) == 2 * 2 * 2 + 1
    assert '"cells"' in controller.report("json")


def test_invalid_config_and_format():
    with pytest.raises(ConfigError):
        BenchController(BenchConfig(ratios=[0.0])).process()
    with pytest.raises(ConfigError):
        BenchController(BenchConfig(repetitions=0)).process()
    cfg = BenchConfig(lengths=[8], ratios=[0.5], batch_size=2, repetitions=2, warmup=0)
    controller = BenchController(cfg)
    controller.process()
    with pytest.raises(ConfigError):
        controller.report("xml")


def test_process_twice_does_not_accumulate():
    controller = BenchController(BenchConfig(lengths=[8], ratios=[0.25, 0.5], batch_size=2, repetitions=2, warmup=0))
    first = controller.process()
    second = controller.process()
    assert len(first.cells) == len(second.cells) == 2
    assert len(second.warnings) <= 2
