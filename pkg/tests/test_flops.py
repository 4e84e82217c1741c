import pytest
from hypothesis import given, strategies as st

from ltplab.controllers.encoder import ModelConfig
from ltplab.controllers.flops import (
    FlopsReport,
    attention_terms,
    average_reports,
    layer_flops,
    linear_terms,
    model_flops,
)
from ltplab.core.errors import FlopsError

CFG = ModelConfig(num_layers=4, num_heads=4, d_model=64, d_ffn=256, n_max=512)


def test_unpruned_is_exactly_one():
    assert model_flops([100] * 4, CFG).relative == 1.0


def test_layer_terms_closed_form():
    n, d, f = 10, 64, 256
    assert linear_terms(n, CFG) == 8 * n * d * d + 4 * n * d * f
    assert attention_terms(n, CFG) == 4 * n * n * d
    assert layer_flops(n, CFG) == linear_terms(n, CFG) + attention_terms(n, CFG)


@given(st.integers(1, 256))
def test_halving_every_layer_lands_between_quarter_and_half(n):
    ratio = layer_flops(n, CFG) / layer_flops(2 * n, CFG)
    assert 0.25 < ratio < 0.5


def test_all_but_protected_pruned_after_first_layer():
    n = 128
    report = model_flops([n, 1, 1, 1], CFG)
    expected = (layer_flops(n, CFG) + 3 * layer_flops(1, CFG)) / (4 * layer_flops(n, CFG))
    assert report.relative == pytest.approx(expected)


def test_average_of_one_is_identity():
    report = model_flops([50, 40, 30, 20], CFG)
    averaged = average_reports([report])
    assert averaged.total == report.total
    assert averaged.relative == report.relative


def test_average_is_ratio_of_means():
    short = model_flops([10, 5, 5, 5], CFG)
    long = model_flops([100, 100, 100, 100], CFG)
    averaged = average_reports([short, long])
    assert averaged.relative == pytest.approx((short.total + long.total) / (short.baseline + long.baseline))


def test_errors():
    with pytest.raises(FlopsError):
        layer_flops(0, CFG)
    with pytest.raises(FlopsError):
        model_flops([10, 10], CFG)
    with pytest.raises(FlopsError):
        model_flops([1000, 10, 10, 10], CFG)
    with pytest.raises(FlopsError):
        average_reports([])


def test_report_dict_roundtrip():
    report = model_flops([20, 10, 5, 5], CFG)
    restored = FlopsReport.from_dict(report.to_dict())
    assert restored == report
    assert report.to_csv_row().count(",") == 2
