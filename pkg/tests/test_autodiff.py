import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ltplab.controllers.autodiff import (
    Tensor,
    backward,
    concat,
    count_flops,
    cross_entropy,
    gelu,
    grad_check,
    layer_norm,
    log_softmax,
    matmul,
    no_grad,
    sigmoid,
    softmax,
    take,
    transpose,
    tsum,
)
from ltplab.core.errors import GradientError, ShapeError

TOL = 1e-6


def test_shared_node_accumulates():
    x = Tensor([1.5, -2.0], requires_grad=True)
    y = tsum(x * x + x)
    backward(y)
    assert np.allclose(x.grad, 2 * x.data + 1)


def test_leaf_grad_accumulates_across_calls():
    x = Tensor([3.0], requires_grad=True)
    backward(tsum(x * 2.0))
    backward(tsum(x * 2.0))
    assert np.allclose(x.grad, [4.0])


def test_three_op_chain_matches_hand_derived_gradient(rng):
    w = rng.normal(size=(3, 4))
    c = rng.normal(size=(3, 1))
    x = Tensor(rng.normal(size=(4, 1)), requires_grad=True)
    backward(tsum(sigmoid(matmul(Tensor(w), x)) * c))

    s = 1.0 / (1.0 + np.exp(-(w @ x.data)))
    assert np.allclose(x.grad, w.T @ (c * s * (1.0 - s)), atol=1e-12)


def test_broadcast_add_and_mul(rng):
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(3, 1)), requires_grad=True)
    w = rng.normal(size=(3, 4))
    assert grad_check(lambda t: tsum((a * t + t) * w), b) < TOL
    assert grad_check(lambda t: tsum((t * b + t) * w), a) < TOL
    assert grad_check(lambda t: tsum(a / (t * t + 1.0) * w), b) < TOL


def test_batched_matmul_gradients(rng):
    w = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
    x = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
    weights = rng.normal(size=(2, 3, 5))
    assert grad_check(lambda t: tsum(matmul(t, x) * weights), w) < TOL
    assert grad_check(lambda t: tsum(matmul(w, t) * weights), x) < TOL


@pytest.mark.parametrize("op", [softmax, log_softmax, sigmoid, gelu])
def test_elementwise_and_normalizing_ops(op, rng):
    x = Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    w = rng.normal(size=(3, 5))
    assert grad_check(lambda t: tsum(op(t) * w), x) < TOL


def test_layer_norm_gradients(rng):
    x = Tensor(rng.normal(size=(6, 4)), requires_grad=True)
    gamma = Tensor(rng.normal(size=(6, 1)), requires_grad=True)
    beta = Tensor(rng.normal(size=(6, 1)), requires_grad=True)
    w = rng.normal(size=(6, 4))
    assert grad_check(lambda t: tsum(layer_norm(t, gamma, beta) * w), x) < 1e-5
    assert grad_check(lambda t: tsum(layer_norm(x, t, beta) * w), gamma) < 1e-5
    assert grad_check(lambda t: tsum(layer_norm(x, gamma, t) * w), beta) < 1e-5


def test_take_with_repeats_and_concat(rng):
    x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    w = rng.normal(size=(4, 4))
    assert grad_check(lambda t: tsum(take(t, [0, 2, 2, 1], axis=1) * w), x) < TOL
    w2 = rng.normal(size=(8, 3))
    assert grad_check(lambda t: tsum(concat([t, transpose(transpose(t))], axis=0) * w2), x) < TOL


def test_cross_entropy_gradient(rng):
    logits = Tensor(rng.normal(size=(3,)), requires_grad=True)
    assert grad_check(lambda t: cross_entropy(t, 2), logits) < TOL
    value = cross_entropy(logits, 1).item()
    expected = -np.log(np.exp(logits.data[1]) / np.exp(logits.data).sum())
    assert value == pytest.approx(expected)


def test_cross_entropy_rejects_bad_target():
    with pytest.raises(ShapeError):
        cross_entropy(Tensor([0.1, 0.2]), 2)


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))


def test_add_broadcast_error():
    with pytest.raises(ShapeError, match="add"):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((4,)))


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(GradientError):
        backward(x * 2.0)


def test_backward_requires_grad_path():
    with pytest.raises(GradientError):
        backward(tsum(Tensor(np.ones(3))))


def test_no_grad_records_nothing():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = tsum(x * 3.0)
    assert not y.requires_grad
    assert y.is_leaf


def test_count_flops_matmul():
    with count_flops() as counter:
        matmul(Tensor(np.ones((3, 4))), Tensor(np.ones((4, 5))))
        matmul(Tensor(np.ones((2, 3, 4))), Tensor(np.ones((4, 5))))
    assert counter.matmul_calls == 2
    assert counter.matmul_flops == 2 * 3 * 5 * 4 + 2 * 2 * 3 * 5 * 4


def test_grad_check_restores_state():
    x = Tensor([1.0, 2.0])
    grad_check(lambda t: tsum(t * t), x)
    assert not x.requires_grad
    assert x.grad is None
    assert np.array_equal(x.data, [1.0, 2.0])


def test_grad_check_leaves_other_leaves_untouched():
    x = Tensor([1.0, 2.0])
    w = Tensor([3.0, -1.0], requires_grad=True)
    b = Tensor([0.5], requires_grad=True)
    b.grad = np.array([7.0])
    assert grad_check(lambda t: tsum(t * w + b), x) < TOL
    assert w.grad is None
    assert np.array_equal(b.grad, [7.0])


def test_grad_check_rejects_non_scalar():
    with pytest.raises(GradientError):
        grad_check(lambda t: t * 2.0, Tensor([1.0, 2.0]))


def test_item_rejects_vectors():
    with pytest.raises(ShapeError):
        Tensor([1.0, 2.0]).item()


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 7), elements=st.floats(-50, 50)))
def test_softmax_rows_are_distributions(values):
    probs = softmax(Tensor(values), axis=-1).data
    assert np.all(probs >= 0)
    assert np.allclose(probs.sum(axis=-1), 1.0)
