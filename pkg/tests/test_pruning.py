import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ltplab.controllers.autodiff import Tensor, backward, no_grad, softmax, tsum
from ltplab.controllers.encoder import CLS_ID
from ltplab.controllers.pruning import (
    PruneContext,
    PruneMode,
    PruneTrace,
    Pruner,
    LayerTrace,
    ThresholdSet,
    apply_soft_mask,
    compact,
    hard_mask,
    importance_scores,
    manual_thresholds,
    protect_soft,
    reg_loss,
    schedule_counts,
    soft_mask,
    spatten_schedule,
    topk_select,
)
from ltplab.core.errors import PruningError

scores_strategy = arrays(
    np.float64, st.integers(2, 40),
    elements=st.floats(0.0, 1.0, allow_nan=False), unique=True,
)


def attention(rng, heads, n, active):
    logits = rng.normal(size=(heads, n, n))
    logits = logits + np.where(active, 0.0, -1e30).reshape(1, 1, n)
    return softmax(Tensor(logits), axis=-1)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 24), st.integers(1, 4), st.integers(0, 10_000))
def test_importance_sums_to_one_over_active_tokens(n, heads, seed):
    rng = np.random.default_rng(seed)
    active = rng.random(n) < 0.8
    active[0] = True
    scores = importance_scores(attention(rng, heads, n, active), active).data
    assert abs(scores[active].sum() - 1.0) < 1e-9
    assert np.all(scores[~active] == 0.0)


def test_importance_rejects_mismatched_shapes():
    with pytest.raises(PruningError):
        importance_scores(np.ones((2, 3, 3)) / 3, np.ones(4, dtype=bool))


def test_hard_mask_is_strict():
    keep = hard_mask(np.array([0.1, 0.2, 0.3]), 0.2)
    assert keep.tolist() == [False, False, True]


def test_hard_mask_keeps_protected():
    assert hard_mask(np.array([0.0, 0.5]), 0.9, protected=[0]).tolist() == [True, False]


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 16, elements=st.floats(0.0, 1.0)), st.floats(0.0, 1.0))
def test_soft_mask_converges_to_hard_mask(scores, theta):
    assume(np.all(np.abs(scores - theta) > 1e-6))
    soft = soft_mask(scores, theta, temperature=1e-8).data
    assert np.array_equal(soft > 0.5, hard_mask(scores, theta))


@settings(max_examples=200, deadline=None)
@given(scores_strategy)
def test_topk_matches_threshold_between_order_statistics(scores):
    ordered = np.sort(scores)[::-1]
    for k in range(1, scores.size):
        theta = (ordered[k - 1] + ordered[k]) / 2.0
        if not ordered[k] < theta < ordered[k - 1]:
            continue  # adjacent floats, no midpoint
        assert np.array_equal(hard_mask(scores, theta), topk_select(scores, k))


def test_topk_breaks_ties_by_lowest_index():
    assert topk_select(np.array([0.5, 0.5, 0.5]), 2).tolist() == [True, True, False]


def test_topk_rejects_bad_k():
    with pytest.raises(PruningError):
        topk_select(np.array([0.1, 0.2]), 3)


def test_protect_soft_pins_position():
    mask = protect_soft(Tensor([0.1, 0.2, 0.3]), [0])
    assert mask.data.tolist() == pytest.approx([1.0, 0.2, 0.3])


def test_reg_loss_averages_layers_and_skips_pads():
    masks = [Tensor([1.0, 0.5, 0.25]), Tensor([0.5, 1.0, 1.0])]
    pad = np.array([False, False, True])
    assert reg_loss(masks, pad).item() == pytest.approx((1.5 + 1.5) / 2)
    assert reg_loss(masks).item() == pytest.approx((1.75 + 2.5) / 2)


def test_reg_loss_requires_masks():
    with pytest.raises(PruningError):
        reg_loss([])


def test_manual_thresholds_rise_linearly():
    assert manual_thresholds(0.01, 4).to_list() == pytest.approx([0.0025, 0.005, 0.0075, 0.01])
    assert manual_thresholds(0.3, 1).to_list() == pytest.approx([0.3])
    assert not manual_thresholds(0.01, 4).learnable


def test_manual_thresholds_reject_negative():
    with pytest.raises(PruningError):
        manual_thresholds(-0.1, 4)


def test_spatten_schedule_dense_then_linear():
    ratios = spatten_schedule(0.5, 6)
    assert ratios[:3] == [1.0, 1.0, 1.0]
    assert ratios[3:] == pytest.approx([1 - 0.5 / 3, 1 - 1.0 / 3, 0.5])


def test_spatten_schedule_clamps_negative_final():
    assert spatten_schedule(-0.5, 4) == [1.0, 1.0, 1.0, 0.0]


def test_spatten_schedule_needs_enough_layers():
    with pytest.raises(PruningError):
        spatten_schedule(0.5, 3)


def test_schedule_counts():
    assert schedule_counts([1.0, 0.5, 0.1, 0.0], 10) == [10, 5, 1, 1]
    assert schedule_counts([0.25], 7) == [2]


def test_compact_follows_index_map():
    x = Tensor(np.arange(8.0).reshape(2, 4))
    out, mapping = compact(x, [True, False, True, True], np.array([0, 3, 5, 6]))
    assert out.shape == (2, 3)
    assert mapping.tolist() == [0, 5, 6]
    with pytest.raises(PruningError):
        compact(x, [False] * 4)


def test_context_validation():
    with pytest.raises(PruningError):
        PruneContext(mode=PruneMode.HARD)
    with pytest.raises(PruningError):
        PruneContext(mode=PruneMode.SPATTEN, counts=[2, 2])
    with pytest.raises(PruningError):
        PruneContext(mode=PruneMode.TOPK, schedule=[1.5])
    with pytest.raises(PruningError):
        PruneContext(mode=PruneMode.TOPK, counts=[0])
    ctx = PruneContext(mode=PruneMode.TOPK, schedule=[0.5, 0.5])
    with pytest.raises(PruningError):
        ctx.validate(3)


def test_keep_count_never_grows():
    ctx = PruneContext(mode=PruneMode.TOPK, counts=[8, 3])
    assert ctx.keep_count(0, n=20, current=5) == 5
    assert ctx.keep_count(1, n=20, current=5) == 3


def test_threshold_set_freeze_and_roundtrip():
    thresholds = ThresholdSet([0.1, 0.2], temperature=1e-3)
    assert thresholds.theta.requires_grad
    thresholds.freeze()
    assert not thresholds.theta.requires_grad
    restored = ThresholdSet.from_dict(thresholds.to_dict())
    assert restored.to_list() == thresholds.to_list()
    assert restored.temperature == thresholds.temperature


def test_threshold_set_rejects_bad_temperature():
    with pytest.raises(PruningError):
        ThresholdSet([0.1], temperature=0.0)


def test_trace_lengths():
    def layer(retained):
        return LayerTrace(scores=np.zeros(6), mask=np.zeros(6), retained=np.array(retained))

    trace = PruneTrace(n=6, pad=np.zeros(6, dtype=bool), layers=[layer([0, 1, 4]), layer([0, 4]), layer([0])])
    assert trace.retained_counts == [3, 2, 1]
    assert trace.lengths == [6, 3, 2]
    assert trace.trajectory() == [6, 3, 2, 1]


@pytest.mark.parametrize("temperature", [1e-4, 1e-3, 0.05])
def test_soft_mask_slope_at_threshold(temperature):
    theta = Tensor([0.3], requires_grad=True)
    backward(tsum(soft_mask(np.array([0.3]), theta, temperature)))
    assert theta.grad[0] == pytest.approx(-1.0 / (4.0 * temperature))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(2, 20))
def test_reg_loss_never_pushes_thresholds_down(seed, num_layers, n):
    rng = np.random.default_rng(seed)
    thresholds = ThresholdSet(rng.uniform(0.0, 0.2, size=num_layers), temperature=0.05)
    masks = [soft_mask(rng.dirichlet(np.ones(n)), thresholds.layer(l), thresholds.temperature)
             for l in range(num_layers)]
    backward(reg_loss(masks))
    assert np.all(thresholds.theta.grad <= 0.0)


def test_apply_soft_mask_multiplies_running_product():
    out, running = apply_soft_mask(Tensor(np.ones((2, 3))), Tensor([0.5, 0.5, 1.0]), Tensor([0.5, 1.0, 1.0]))
    assert running.data.tolist() == [0.25, 0.5, 1.0]
    assert out.data.tolist() == [[0.25, 0.5, 1.0], [0.25, 0.5, 1.0]]


def test_compact_twice_equals_compacting_the_intersection():
    x = Tensor(np.arange(12.0).reshape(2, 6))
    first, mapping = compact(x, [True, False, True, True, False, True])
    second, mapping = compact(first, [True, False, False, True], mapping)
    direct, direct_mapping = compact(x, [True, False, False, False, False, True])
    assert mapping.tolist() == direct_mapping.tolist() == [0, 5]
    assert np.array_equal(second.data, direct.data)


def test_hard_thresholds_match_topk_with_the_same_counts(tiny_model, rng):
    thresholds = ThresholdSet([0.03, 0.06], learnable=False)
    with no_grad():
        for _ in range(10):
            tokens = rng.integers(2, 32, size=int(rng.integers(8, 30)))
            tokens[0] = CLS_ID
            by_threshold_logits, by_threshold = tiny_model.forward(
                tokens, PruneContext(mode=PruneMode.HARD, thresholds=thresholds))
            counts = by_threshold.trace.retained_counts
            by_rank_logits, by_rank = tiny_model.forward(tokens, PruneContext(mode=PruneMode.TOPK, counts=counts))
            assert by_rank.trace.retained_sets() == by_threshold.trace.retained_sets()
            assert np.allclose(by_rank_logits.data, by_threshold_logits.data)


def step_inputs(scores):
    n = len(scores)
    x = Tensor(np.arange(3.0 * n).reshape(3, n))
    return x, Tensor(np.asarray(scores, dtype=np.float64)), np.arange(n), np.ones(n, dtype=bool)


def test_pruner_hard_steps_compact_and_trace():
    ctx = PruneContext(mode="hard", thresholds=ThresholdSet([0.25, 0.25], learnable=False))
    pruner = Pruner(ctx, np.zeros(4, dtype=bool))
    assert pruner.hard

    x, scores, index_map, key_mask = step_inputs([0.4, 0.1, 0.3, 0.2])
    out, index_map, key_mask = pruner.step(0, x, scores, index_map, key_mask)
    assert index_map.tolist() == [0, 2]
    assert np.array_equal(out.data, x.data[:, [0, 2]])
    assert key_mask.tolist() == [True, True]
    assert pruner.trace.layers[0].mask.tolist() == [1.0, 0.0, 1.0, 0.0]
    assert pruner.trace.layers[0].scores.tolist() == [0.4, 0.1, 0.3, 0.2]

    out, index_map, _ = pruner.step(1, out, Tensor([0.1, 0.9]), index_map, key_mask)
    assert index_map.tolist() == [0, 2]
    out, index_map, _ = pruner.step(1, out, Tensor([0.9, 0.1]), index_map, key_mask)
    assert index_map.tolist() == [0]
    assert pruner.trace.retained_counts == [2, 2, 1]
    assert pruner.trace.layers[2].scores.tolist() == [0.9, 0.0, 0.1, 0.0]


def test_pruner_soft_step_keeps_positions_and_scales_columns():
    ctx = PruneContext(mode="soft", thresholds=ThresholdSet([0.25], temperature=1e-3))
    pruner = Pruner(ctx, np.zeros(4, dtype=bool))
    assert not pruner.hard

    x, scores, index_map, key_mask = step_inputs([0.01, 0.1, 0.3, 0.2])
    out, new_map, _ = pruner.step(0, x, scores, index_map, key_mask)
    assert new_map.tolist() == [0, 1, 2, 3]
    assert np.allclose(pruner.running.data, [1.0, 0.0, 1.0, 0.0], atol=1e-12)
    assert np.allclose(out.data, x.data * pruner.running.data, atol=1e-9)
    assert len(pruner.trace.mask_tensors) == 1
    assert pruner.trace.layers[0].retained.tolist() == [0, 2]


def test_pruner_topk_counts_non_pad_tokens():
    ctx = PruneContext(mode="topk", counts=[2])
    pruner = Pruner(ctx, np.array([False, False, False, True]))
    assert pruner.trace.n == 3

    x, scores, index_map, key_mask = step_inputs([0.1, 0.5, 0.4])
    _, index_map, _ = pruner.step(0, x, scores, index_map, key_mask)
    assert index_map.tolist() == [0, 1]
    assert pruner.trace.layers[0].mask.tolist() == [1.0, 1.0, 0.0, 0.0]
