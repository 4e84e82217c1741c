"""
Reverse-mode automatic differentiation over dense float64 tensors.

The tape is rebuilt on every forward pass: each primitive that touches a
tensor requiring grad records its parents and a backward closure on the
result. ``backward`` orders the recorded nodes topologically and runs the
closures once each, accumulating into leaf ``grad`` buffers.
"""

from __future__ import annotations

import contextvars
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf, expit

from ltplab.core.errors import GradientError, ShapeError

LN_EPS = 1e-5

_grad_enabled: contextvars.ContextVar[bool] = contextvars.ContextVar(
    "ltplab_grad_enabled", default=True
)


@dataclass
class FlopCounter:
    matmul_flops: int = 0
    matmul_calls: int = 0


_flop_counter: contextvars.ContextVar[FlopCounter | None] = contextvars.ContextVar(
    "ltplab_flop_counter", default=None
)


@contextmanager
def count_flops():
    """Counts 2·m·k·n FLOPs for every matmul executed inside the block."""
    counter = FlopCounter()
    token = _flop_counter.set(counter)
    try:
        yield counter
    finally:
        _flop_counter.reset(token)


@contextmanager
def no_grad():
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


class Tensor:
    """Dense float64 array with an optional gradient buffer."""

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: str | None = None,
        _parents: tuple["Tensor", ...] = (),
        _op: str = "",
    ):
        self.data = np.array(data, dtype=np.float64) if not _parents else data
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents = _parents
        self._op = _op
        self._backward: Callable[[np.ndarray], None] | None = None

    # ----------------------------------
    # Introspection
    # ----------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item: tensor of shape {self.shape} is not a scalar")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # ----------------------------------
    # Operators
    # ----------------------------------

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False): return tsum(self, axis, keepdims)
    def mean(self, axis=None, keepdims: bool = False): return mean(self, axis, keepdims)
    def transpose(self, *axes): return transpose(self, axes or None)
    def reshape(self, *shape): return reshape(self, shape)
    def sigmoid(self): return sigmoid(self)

    @property
    def T(self): return transpose(self)

    def backward(self) -> None:
        backward(self)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _record(data: np.ndarray, parents: Sequence[Tensor], op: str, backward_fn) -> Tensor:
    needs_grad = _grad_enabled.get() and any(p.requires_grad for p in parents)
    if not needs_grad:
        return Tensor(np.asarray(data, dtype=np.float64))
    out = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True,
                 _parents=tuple(parents), _op=op)
    out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _accumulate(tensor: Tensor, grad: np.ndarray) -> None:
    if not tensor.requires_grad:
        return
    grad = _unbroadcast(np.asarray(grad, dtype=np.float64), tensor.shape)
    if tensor.grad is None:
        tensor.grad = np.array(grad, dtype=np.float64)
    else:
        tensor.grad = tensor.grad + grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# ----------------------------------
# Elementwise primitives
# ----------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def _backward(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _record(a.data + b.data, (a, b), "add", _backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def _backward(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _record(a.data - b.data, (a, b), "sub", _backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def _backward(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _record(a.data * b.data, (a, b), "mul", _backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)

    def _backward(g):
        _accumulate(a, g / b.data)
        _accumulate(b, -g * a.data / (b.data ** 2))

    return _record(a.data / b.data, (a, b), "div", _backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _record(-a.data, (a,), "neg", lambda g: _accumulate(a, -g))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = expit(a.data)
    return _record(y, (a,), "sigmoid", lambda g: _accumulate(a, g * y * (1.0 - y)))


def gelu(a) -> Tensor:
    """Exact GELU, x·Φ(x)."""
    a = as_tensor(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))

    def _backward(g):
        pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
        _accumulate(a, g * (cdf + x * pdf))

    return _record(x * cdf, (a,), "gelu", _backward)


# ----------------------------------
# Linear algebra and layout
# ----------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ for shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch dimensions differ for shapes {a.shape} and {b.shape}") from None

    out_data = np.matmul(a.data, b.data)

    counter = _flop_counter.get()
    if counter is not None:
        counter.matmul_flops += 2 * int(out_data.size) * int(a.shape[-1])
        counter.matmul_calls += 1

    def _backward(g):
        if a.requires_grad:
            _accumulate(a, np.matmul(g, np.swapaxes(b.data, -1, -2)))
        if b.requires_grad:
            _accumulate(b, np.matmul(np.swapaxes(a.data, -1, -2), g))

    return _record(out_data, (a, b), "matmul", _backward)


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes) if axes is not None else tuple(reversed(range(a.data.ndim)))
    if sorted(axes) != list(range(a.data.ndim)):
        raise ShapeError(f"transpose: axes {axes} do not match shape {a.shape}")
    inverse = tuple(np.argsort(axes))
    return _record(np.transpose(a.data, axes), (a,), "transpose",
                   lambda g: _accumulate(a, np.transpose(g, inverse)))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    try:
        out_data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} into {shape}") from None
    original = a.shape
    return _record(out_data, (a,), "reshape", lambda g: _accumulate(a, g.reshape(original)))


def take(a, indices, axis: int = 0) -> Tensor:
    """Gathers slices along ``axis``; backward scatters with accumulation."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < -a.shape[axis] or idx.max() >= a.shape[axis]):
        raise ShapeError(f"take: indices out of range for axis {axis} of shape {a.shape}")

    def _backward(g):
        full = np.zeros_like(a.data)
        np.add.at(np.moveaxis(full, axis, 0), idx, np.moveaxis(g, axis, 0))
        _accumulate(a, full)

    return _record(np.take(a.data, idx, axis=axis), (a,), "take", _backward)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: no operands")
    try:
        out_data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concat: incompatible shapes {shapes} along axis {axis}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward(g):
        for t, part in zip(tensors, np.split(g, bounds, axis=axis)):
            _accumulate(t, part)

    return _record(out_data, tensors, "concat", _backward)


# ----------------------------------
# Reductions
# ----------------------------------

def _expand_reduced(g: np.ndarray, shape: tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    return _record(a.data.sum(axis=axis, keepdims=keepdims), (a,), "sum",
                   lambda g: _accumulate(a, _expand_reduced(g, shape, axis, keepdims)))


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    count = a.data.size if axis is None else int(np.prod([a.shape[ax] for ax in np.atleast_1d(axis)]))
    return mul(tsum(a, axis, keepdims), 1.0 / count)


def l1_norm(a) -> Tensor:
    a = as_tensor(a)
    return _record(np.abs(a.data).sum(), (a,), "l1_norm",
                   lambda g: _accumulate(a, g * np.sign(a.data)))


# ----------------------------------
# Normalizations
# ----------------------------------

def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def _backward(g):
        _accumulate(a, y * (g - (g * y).sum(axis=axis, keepdims=True)))

    return _record(y, (a,), "softmax", _backward)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    out_data = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def _backward(g):
        _accumulate(a, g - np.exp(out_data) * g.sum(axis=axis, keepdims=True))

    return _record(out_data, (a,), "log_softmax", _backward)


def layer_norm(x, gamma, beta, axis: int = 0, eps: float = LN_EPS) -> Tensor:
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    _broadcast_shape("layer_norm", x, gamma)
    _broadcast_shape("layer_norm", x, beta)

    mu = x.data.mean(axis=axis, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=axis, keepdims=True) + eps)
    xhat = centered * inv_std
    count = x.shape[axis]

    def _backward(g):
        if x.requires_grad:
            gx = g * gamma.data
            _accumulate(x, inv_std / count * (
                count * gx
                - gx.sum(axis=axis, keepdims=True)
                - xhat * (gx * xhat).sum(axis=axis, keepdims=True)
            ))
        _accumulate(gamma, g * xhat)
        _accumulate(beta, g)

    return _record(gamma.data * xhat + beta.data, (x, gamma, beta), "layer_norm", _backward)


def cross_entropy(logits, target: int) -> Tensor:
    """Negative log-likelihood of ``target`` under softmax(logits)."""
    logits = as_tensor(logits)
    flat = logits.data.reshape(-1)
    if not 0 <= target < flat.size:
        raise ShapeError(f"cross_entropy: target {target} outside {flat.size} classes")
    shifted = flat - flat.max()
    log_probs = shifted - np.log(np.exp(shifted).sum())

    def _backward(g):
        probs = np.exp(log_probs)
        probs[target] -= 1.0
        _accumulate(logits, (g * probs).reshape(logits.shape))

    return _record(np.asarray(-log_probs[target]), (logits,), "cross_entropy", _backward)


# ----------------------------------
# Reverse pass
# ----------------------------------

class Graph:
    """Nodes reachable from an output, in topological (construction) order."""

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def from_output(cls, output: Tensor) -> "Graph":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        return cls(order)

    def backward(self, seed: np.ndarray) -> None:
        output = self.nodes[-1]
        for node in self.nodes:
            if not node.is_leaf:
                node.grad = None
        output.grad = np.array(seed, dtype=np.float64)
        for node in reversed(self.nodes):
            if node.is_leaf or node._backward is None or node.grad is None:
                continue
            node._backward(node.grad)

    def release(self) -> None:
        for node in self.nodes:
            if not node.is_leaf:
                node._parents = ()
                node._backward = None
                node.grad = None


def backward(loss: Tensor) -> None:
    if loss.data.size != 1:
        raise GradientError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GradientError("backward: loss does not depend on any tensor requiring grad")
    graph = Graph.from_output(loss)
    graph.backward(np.ones_like(loss.data))
    graph.release()


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def grad_check(
    f: Callable[[Tensor], Tensor],
    at: Tensor,
    eps: float = 1e-6,
    indices: Sequence[int] | None = None,
) -> float:
    """
    Compares the analytic gradient of scalar ``f`` w.r.t. ``at`` against
    central differences, perturbing ``at`` in place.

    Returns max |analytic - numeric| / max(1, |analytic|) over the checked
    flat coordinates (all of them unless ``indices`` is given).
    """
    if eps <= 0:
        raise GradientError(f"grad_check: eps must be positive, got {eps}")

    was_requiring, saved_grad = at.requires_grad, at.grad
    at.requires_grad = True
    at.grad = None
    try:
        out = f(at)
        if out.data.size != 1:
            raise GradientError(f"grad_check: f must be scalar-valued, got shape {out.shape}")
        if not np.all(np.isfinite(out.data)):
            raise GradientError("grad_check: function value is not finite")
        if out.requires_grad:
            others = [node for node in Graph.from_output(out).nodes if node.is_leaf and node is not at]
            saved = [node.grad for node in others]
            backward(out)
            for node, grad in zip(others, saved):
                node.grad = grad
        analytic = at.grad.reshape(-1).copy() if at.grad is not None else np.zeros(at.size)
    finally:
        at.requires_grad = was_requiring
        at.grad = saved_grad

    flat = at.data.flat
    coords = range(at.size) if indices is None else indices
    worst = 0.0
    with no_grad():
        for i in coords:
            original = flat[i]
            flat[i] = original + eps
            plus = f(at).item()
            flat[i] = original - eps
            minus = f(at).item()
            flat[i] = original
            numeric = (plus - minus) / (2.0 * eps)
            if not (np.isfinite(numeric) and np.isfinite(analytic[i])):
                raise GradientError(f"grad_check: non-finite gradient at coordinate {i}")
            worst = max(worst, abs(analytic[i] - numeric) / max(1.0, abs(analytic[i])))
    return worst
