#!/usr/bin/env python3
# Copyright (c) 2025 John Hull
# Licensed under the MIT License - see LICENSE file
"""
Dense tensor arithmetic with reverse-mode automatic differentiation.

Values are float64 numpy arrays in row-major order; image tensors use the
NCHW layout. A ``Node`` carries a value, a lazily allocated gradient and the
backward closures linking it to its parents. Binary elementwise operations
only broadcast scalars; anything wider must go through ``broadcast_to`` so
that shape mistakes fail loudly.

Every public operation checks its result for NaN/Inf and raises
``NonFiniteError`` naming the operation.

Usage:
    from tensor_autodiff import parameter, constant, reduce_sum, backward
    w = parameter(np.ones(3), name="w")
    loss = reduce_sum(w * constant([1.0, 2.0, 3.0]))
    backward(loss)          # w.grad == [1, 2, 3]
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from constants import FD_STEP, GRAD_ATOL, GRAD_RTOL, GRAD_SMALL, GRAD_SMALL_ATOL
from utils.error_handling import DivisionByZeroError, NonFiniteError, ShapeError

Tensor = np.ndarray
Scalar = Union[int, float]
IntPair = Union[int, Tuple[int, int]]

BackwardFn = Callable[[np.ndarray], np.ndarray]


def as_tensor(data) -> Tensor:
    """Copy ``data`` into a finite float64 array."""
    arr = np.array(data, dtype=np.float64)
    _check_finite(arr, "as_tensor")
    return arr


def _check_finite(value: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(value)):
        raise NonFiniteError(f"{op} produced non-finite values")


class Node:
    """A value in the differentiation graph."""

    __slots__ = ("value", "_grad", "parents", "requires_grad", "name")

    def __init__(self, value, requires_grad: bool = False, name: Optional[str] = None,
                 parents: Sequence[Tuple["Node", BackwardFn]] = ()):
        self.value = value
        self._grad: Optional[np.ndarray] = None
        self.parents = tuple(parents)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.value)
        return self._grad

    @grad.setter
    def grad(self, value: Optional[np.ndarray]) -> None:
        self._grad = None if value is None else np.array(value, dtype=np.float64)

    def zero_grad(self) -> None:
        self._grad = None

    def backward(self) -> None:
        backward(self)

    def item(self) -> float:
        return float(self.value.reshape(-1)[0])

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims: bool = False) -> "Node":
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Node":
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Node":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Node(shape={self.shape}{label}, requires_grad={self.requires_grad})"


def constant(data, name: Optional[str] = None) -> Node:
    """Wrap data as a node that never receives gradients."""
    return Node(as_tensor(data), requires_grad=False, name=name)


def parameter(data, name: Optional[str] = None) -> Node:
    """Wrap data as a trainable leaf node."""
    return Node(as_tensor(data), requires_grad=True, name=name)


def _lift(x) -> Node:
    if isinstance(x, Node):
        return x
    return constant(x)


def _make(value: np.ndarray, op: str, links: Iterable[Tuple[Node, BackwardFn]]) -> Node:
    value = np.asarray(value, dtype=np.float64)
    _check_finite(value, op)
    value.flags.writeable = False
    parents = tuple((node, fn) for node, fn in links if node.requires_grad)
    return Node(value, requires_grad=bool(parents), parents=parents)


def _is_scalar(node: Node) -> bool:
    return node.value.size == 1 and node.value.ndim <= 1


def _check_elementwise(a: Node, b: Node, op: str) -> None:
    if a.shape == b.shape or _is_scalar(a) or _is_scalar(b):
        return
    raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not conform "
                     "(only scalar broadcasting is supported)")


def _reduce_to(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    return np.full(shape, grad.sum())


# ── elementwise arithmetic ─────────────────────────────────────────

def add(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    _check_elementwise(a, b, "add")
    return _make(a.value + b.value, "add", [
        (a, lambda g: _reduce_to(g, a.shape)),
        (b, lambda g: _reduce_to(g, b.shape)),
    ])


def sub(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    _check_elementwise(a, b, "sub")
    return _make(a.value - b.value, "sub", [
        (a, lambda g: _reduce_to(g, a.shape)),
        (b, lambda g: _reduce_to(-g, b.shape)),
    ])


def mul(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    _check_elementwise(a, b, "mul")
    av, bv = a.value, b.value
    return _make(av * bv, "mul", [
        (a, lambda g: _reduce_to(g * bv, a.shape)),
        (b, lambda g: _reduce_to(g * av, b.shape)),
    ])


def div(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    _check_elementwise(a, b, "div")
    av, bv = a.value, b.value
    if np.any(bv == 0.0):
        raise DivisionByZeroError(f"div: divisor of shape {b.shape} contains zeros")
    return _make(av / bv, "div", [
        (a, lambda g: _reduce_to(g / bv, a.shape)),
        (b, lambda g: _reduce_to(-g * av / (bv * bv), b.shape)),
    ])


def square(a) -> Node:
    a = _lift(a)
    av = a.value
    return _make(av * av, "square", [(a, lambda g: 2.0 * g * av)])


def sqrt(a) -> Node:
    a = _lift(a)
    if np.any(a.value < 0.0):
        raise NonFiniteError(f"sqrt: negative input of shape {a.shape}")
    root = np.sqrt(a.value)
    return _make(root, "sqrt", [(a, lambda g: 0.5 * g / root)])


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    # Branch on sign so exp() only ever sees non-positive arguments
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Node:
    a = _lift(a)
    s = _stable_sigmoid(a.value)
    return _make(s, "sigmoid", [(a, lambda g: g * s * (1.0 - s))])


def maximum(a, threshold: Scalar) -> Node:
    """Elementwise max with a scalar; the gradient goes to ``a`` where a > threshold."""
    a = _lift(a)
    mask = a.value > threshold
    return _make(np.maximum(a.value, threshold), "maximum", [(a, lambda g: g * mask)])


# ── shape operations ───────────────────────────────────────────────

def reshape(a, shape: Sequence[int]) -> Node:
    a = _lift(a)
    shape = tuple(int(s) for s in shape)
    try:
        value = a.value.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: cannot reshape {a.shape} into {shape}") from e
    return _make(value, "reshape", [(a, lambda g: g.reshape(a.shape))])


def transpose(a) -> Node:
    a = _lift(a)
    if a.value.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got shape {a.shape}")
    return _make(a.value.T.copy(), "transpose", [(a, lambda g: g.T)])


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    lead = grad.ndim - len(shape)
    if lead:
        grad = grad.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def broadcast_to(a, shape: Sequence[int]) -> Node:
    """Explicit numpy-style broadcast; the backward pass sums over expanded axes."""
    a = _lift(a)
    shape = tuple(int(s) for s in shape)
    try:
        value = np.broadcast_to(a.value, shape).copy()
    except ValueError as e:
        raise ShapeError(f"broadcast_to: cannot broadcast {a.shape} to {shape}") from e
    return _make(value, "broadcast_to", [(a, lambda g: _unbroadcast(g, a.shape))])


# ── reductions ─────────────────────────────────────────────────────

def _normalize_axis(axis, ndim: int) -> Optional[Tuple[int, ...]]:
    if axis is None:
        return None
    if isinstance(axis, (int, np.integer)):
        axis = (int(axis),)
    return tuple(ax % ndim for ax in axis)


def reduce_sum(a, axis=None, keepdims: bool = False) -> Node:
    a = _lift(a)
    axes = _normalize_axis(axis, max(a.value.ndim, 1))

    def grad_fn(g):
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        return np.broadcast_to(g, a.shape)

    return _make(np.sum(a.value, axis=axes, keepdims=keepdims), "sum", [(a, grad_fn)])


def reduce_mean(a, axis=None, keepdims: bool = False) -> Node:
    a = _lift(a)
    axes = _normalize_axis(axis, max(a.value.ndim, 1))
    if axes is None:
        count = a.value.size
    else:
        count = int(np.prod([a.shape[ax] for ax in axes]))
    if count == 0:
        raise ShapeError(f"mean: empty reduction over shape {a.shape}")
    return reduce_sum(a, axis=axes, keepdims=keepdims) * (1.0 / count)


# ── linear algebra ─────────────────────────────────────────────────

def matmul(a, b) -> Node:
    a, b = _lift(a), _lift(b)
    if a.value.ndim not in (1, 2) or b.value.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    av, bv = a.value, b.value
    A = av if av.ndim == 2 else av[None, :]
    B = bv if bv.ndim == 2 else bv[:, None]

    def grad_a(g):
        G = g.reshape(A.shape[0], B.shape[1])
        return (G @ B.T).reshape(a.shape)

    def grad_b(g):
        G = g.reshape(A.shape[0], B.shape[1])
        return (A.T @ G).reshape(b.shape)

    return _make(av @ bv, "matmul", [(a, grad_a), (b, grad_b)])


def _pair(v: IntPair) -> Tuple[int, int]:
    if isinstance(v, (int, np.integer)):
        return int(v), int(v)
    return int(v[0]), int(v[1])


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def conv_transpose_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size - 1) * stride - 2 * padding + kernel


def _windows(x: np.ndarray, kernel: Tuple[int, int], stride: Tuple[int, int],
             padding: Tuple[int, int]) -> np.ndarray:
    ph, pw = padding
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, kernel, axis=(2, 3))
    return win[:, :, ::stride[0], ::stride[1]]


def _conv_forward(x, w, stride, padding):
    win = _windows(x, w.shape[2:], stride, padding)
    return np.einsum("nchwij,ocij->nohw", win, w, optimize=True)


def _conv_input_grad(gy, w, x_shape, stride, padding):
    n, c, h, wd = x_shape
    kh, kw = w.shape[2:]
    sh, sw = stride
    ph, pw = padding
    ho, wo = gy.shape[2:]
    cols = np.einsum("nohw,ocij->ncijhw", gy, w, optimize=True)
    gxp = np.zeros((n, c, h + 2 * ph, wd + 2 * pw))
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i:i + sh * ho:sh, j:j + sw * wo:sw] += cols[:, :, i, j]
    return gxp[:, :, ph:ph + h, pw:pw + wd]


def _conv_weight_grad(x, gy, w_shape, stride, padding):
    win = _windows(x, w_shape[2:], stride, padding)
    return np.einsum("nchwij,nohw->ocij", win, gy, optimize=True)


def conv2d(x, w, stride: IntPair = 1, padding: IntPair = 0) -> Node:
    """Cross-correlation of x [N, C, H, W] with w [O, C, kh, kw]."""
    x, w = _lift(x), _lift(w)
    if x.value.ndim != 4 or w.value.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: input {x.shape} and kernel {w.shape} do not conform")
    stride, padding = _pair(stride), _pair(padding)
    ho = conv_output_size(x.shape[2], w.shape[2], stride[0], padding[0])
    wo = conv_output_size(x.shape[3], w.shape[3], stride[1], padding[1])
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: input {x.shape} with kernel {w.shape}, stride {stride}, "
                         f"padding {padding} gives output size {ho}x{wo}")
    xv, wv = x.value, w.value
    return _make(_conv_forward(xv, wv, stride, padding), "conv2d", [
        (x, lambda g: _conv_input_grad(g, wv, xv.shape, stride, padding)),
        (w, lambda g: _conv_weight_grad(xv, g, wv.shape, stride, padding)),
    ])


def conv2d_transposed(x, w, stride: IntPair = 1, padding: IntPair = 0) -> Node:
    """Transposed convolution of x [N, Cin, H, W] with w [Cin, Cout, kh, kw].

    This is exactly the adjoint of ``conv2d`` with the same kernel.
    """
    x, w = _lift(x), _lift(w)
    if x.value.ndim != 4 or w.value.ndim != 4 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"conv2d_transposed: input {x.shape} and kernel {w.shape} do not conform")
    stride, padding = _pair(stride), _pair(padding)
    ho = conv_transpose_output_size(x.shape[2], w.shape[2], stride[0], padding[0])
    wo = conv_transpose_output_size(x.shape[3], w.shape[3], stride[1], padding[1])
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d_transposed: input {x.shape} with kernel {w.shape}, stride {stride}, "
                         f"padding {padding} gives output size {ho}x{wo}")
    xv, wv = x.value, w.value
    out_shape = (x.shape[0], w.shape[1], ho, wo)
    return _make(_conv_input_grad(xv, wv, out_shape, stride, padding), "conv2d_transposed", [
        (x, lambda g: _conv_forward(g, wv, stride, padding)),
        (w, lambda g: _conv_weight_grad(g, xv, wv.shape, stride, padding)),
    ])


def avg_pool2d(x, k: int = 2) -> Node:
    x = _lift(x)
    if x.value.ndim != 4 or x.shape[2] % k or x.shape[3] % k:
        raise ShapeError(f"avg_pool2d: shape {x.shape} not divisible by pool size {k}")
    n, c, h, w = x.shape
    value = x.value.reshape(n, c, h // k, k, w // k, k).mean(axis=(3, 5))

    def grad_fn(g):
        return np.repeat(np.repeat(g, k, axis=2), k, axis=3) / (k * k)

    return _make(value, "avg_pool2d", [(x, grad_fn)])


def upsample_nearest(x, k: int = 2) -> Node:
    x = _lift(x)
    if x.value.ndim != 4:
        raise ShapeError(f"upsample_nearest: expected NCHW input, got {x.shape}")
    n, c, h, w = x.shape
    value = np.repeat(np.repeat(x.value, k, axis=2), k, axis=3)

    def grad_fn(g):
        return g.reshape(n, c, h, k, w, k).sum(axis=(3, 5))

    return _make(value, "upsample_nearest", [(x, grad_fn)])


# ── losses ─────────────────────────────────────────────────────────

def bce_with_logits(logits, target: float) -> Node:
    """Mean binary cross-entropy of sigmoid(logits) against a constant label."""
    a = _lift(logits)
    av = a.value
    value = np.mean(np.logaddexp(0.0, av) - target * av)
    scale = 1.0 / av.size
    return _make(value, "bce_with_logits", [
        (a, lambda g: g * (_stable_sigmoid(av) - target) * scale),
    ])


# ── reverse pass ───────────────────────────────────────────────────

def _topological_order(root: Node) -> List[Node]:
    order: List[Node] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(root: Node) -> None:
    """Populate ``grad`` of every node reachable from a scalar root.

    Leaf gradients accumulate across calls (and across multiple uses within
    one graph); interior gradients are recomputed on every call.
    """
    if root.value.size != 1 or root.value.ndim > 1:
        raise ShapeError(f"backward: root must be scalar, got shape {root.shape}")
    order = _topological_order(root)
    for node in order:
        if node.parents:
            node._grad = None
    root._grad = np.ones_like(root.value) if root._grad is None else root._grad + 1.0

    for node in reversed(order):
        if node._grad is None:
            continue
        upstream = node._grad
        for parent, fn in node.parents:
            contribution = fn(upstream)
            if parent._grad is None:
                parent._grad = np.array(contribution, dtype=np.float64)
            else:
                parent._grad = parent._grad + contribution


def zero_grad(nodes: Iterable[Node]) -> None:
    for node in nodes:
        node.zero_grad()


# ── finite differences ─────────────────────────────────────────────

def finite_diff_grad(f: Callable[[Tensor], float], x, h: float = FD_STEP) -> Tensor:
    """Central-difference gradient (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate."""
    if h <= 0:
        raise ValueError(f"finite_diff_grad: step must be positive, got {h}")
    point = np.array(x, dtype=np.float64)
    flat = point.reshape(-1)
    grad = np.zeros(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        coord = np.unravel_index(i, point.shape) if point.ndim else ()
        try:
            flat[i] = orig + h
            f_plus = float(f(point.copy()))
            flat[i] = orig - h
            f_minus = float(f(point.copy()))
        except NonFiniteError as e:
            raise NonFiniteError(f"finite_diff_grad: f failed at coordinate {coord}: {e}") from e
        finally:
            flat[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NonFiniteError(f"finite_diff_grad: f is non-finite at coordinate {coord}")
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad.reshape(point.shape)


@dataclasses.dataclass
class GradientComparison:
    max_rel_error: float
    max_abs_error: float
    passed: bool
    n_elements: int


def compare_gradients(analytic, numeric, rtol: float = GRAD_RTOL, atol: float = GRAD_ATOL,
                      small: float = GRAD_SMALL, small_atol: float = GRAD_SMALL_ATOL) -> GradientComparison:
    """Compare an autodiff gradient with a finite-difference estimate.

    Entries with |analytic| < small are compared absolutely against small_atol;
    the rest must satisfy |a - n| <= atol + rtol * max(|a|, |n|).
    """
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    if a.shape != n.shape:
        raise ShapeError(f"compare_gradients: shapes {a.shape} and {n.shape} differ")
    diff = np.abs(a - n)
    scale = np.maximum(np.abs(a), np.abs(n))
    tiny = np.abs(a) < small
    ok = np.where(tiny, diff <= small_atol, diff <= atol + rtol * scale)
    rel = np.where(tiny, 0.0, diff / np.where(scale > 0, scale, 1.0))
    return GradientComparison(
        max_rel_error=float(rel.max()) if rel.size else 0.0,
        max_abs_error=float(diff.max()) if diff.size else 0.0,
        passed=bool(ok.all()),
        n_elements=int(a.size),
    )
