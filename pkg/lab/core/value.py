"""
Define-by-run reverse-mode differentiation over 64-bit numpy arrays.

A graph is recorded while operations run and discarded after `backward`.
Every forward result is checked for NaN/Inf; a non-finite value is a hard
error rather than something to clip.
"""
import itertools
import logging
import threading
from contextlib import contextmanager
from typing import Callable, Dict, Iterator, Optional, Sequence, Tuple, Union

import numpy as np

from utils.exceptions import NonFiniteError, ShapeError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]

_node_ids = itertools.count()
_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate without recording a graph (per thread)."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"Non-finite value produced by '{op}'")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Value:
    """
    Graph node holding a float64 array.

    Attributes:
        data (np.ndarray): forward value
        grad (Optional[np.ndarray]): accumulated gradient, same shape as data
        requires_grad (bool): whether gradients are tracked through this node
        node_id (int): opaque graph handle
    """
    __slots__ = ("data", "grad", "requires_grad", "node_id", "op", "_parents", "_backward")
    __array_priority__ = 100.0

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        _parents: Tuple["Value", ...] = (),
        _backward: Optional[Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]] = None,
        op: str = "leaf",
    ):
        self.data = np.asarray(data, dtype=np.float64)
        _check_finite(self.data, op)
        self.requires_grad = requires_grad
        self.node_id = next(_node_ids)
        self.op = op
        self._parents = _parents
        self._backward = _backward
        self.grad = np.zeros_like(self.data) if requires_grad and not _parents else None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Value(op={self.op}, shape={self.data.shape}, requires_grad={self.requires_grad})"

    @staticmethod
    def lift(other: Union["Value", ArrayLike]) -> "Value":
        return other if isinstance(other, Value) else Value(other, op="const")

    def __add__(self, other):
        return add(self, Value.lift(other))

    def __radd__(self, other):
        return add(Value.lift(other), self)

    def __sub__(self, other):
        return sub(self, Value.lift(other))

    def __rsub__(self, other):
        return sub(Value.lift(other), self)

    def __mul__(self, other):
        return mul(self, Value.lift(other))

    def __rmul__(self, other):
        return mul(Value.lift(other), self)

    def __truediv__(self, other):
        return div(self, Value.lift(other))

    def __rtruediv__(self, other):
        return div(Value.lift(other), self)

    def __neg__(self):
        return mul(self, Value(-1.0, op="const"))

    def __matmul__(self, other):
        return matmul(self, Value.lift(other))

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Value":
        return vsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Value":
        return vmean(self, axis=axis, keepdims=keepdims)


def _make(data: np.ndarray, parents: Tuple[Value, ...], backward_fn, op: str) -> Value:
    track = is_grad_enabled() and any(p.requires_grad for p in parents)
    if not track:
        return Value(data, op=op)
    return Value(data, requires_grad=True, _parents=parents, _backward=backward_fn, op=op)


def add(a: Value, b: Value) -> Value:
    return _make(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        "add",
    )


def sub(a: Value, b: Value) -> Value:
    return _make(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a: Value, b: Value) -> Value:
    return _make(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def div(a: Value, b: Value) -> Value:
    return _make(
        a.data / b.data, (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
        "div",
    )


def matmul(a: Value, b: Value) -> Value:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul expects (n,k)@(k,m), got {a.shape} and {b.shape}")
    return _make(
        a.data @ b.data, (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
        "matmul",
    )


def vsum(a: Value, axis: Optional[int] = None, keepdims: bool = False) -> Value:
    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward, "sum")


def vmean(a: Value, axis: Optional[int] = None, keepdims: bool = False) -> Value:
    count = a.data.size if axis is None else a.shape[axis]
    return vsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def square(a: Value) -> Value:
    return _make(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,), "square")


def sqrt(a: Value) -> Value:
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (0.5 * g / out,), "sqrt")


def silu(a: Value) -> Value:
    """x * sigmoid(x): smooth everywhere, so finite-difference JVPs stay clean."""
    sig = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _make(
        a.data * sig, (a,),
        lambda g: (g * (sig + a.data * sig * (1.0 - sig)),),
        "silu",
    )


def concat(values: Sequence[Value], axis: int = -1) -> Value:
    values = tuple(values)
    sizes = [v.shape[axis] for v in values]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([v.data for v in values], axis=axis), values, backward, "concat")


def take_rows(table: Value, index: np.ndarray) -> Value:
    """Gather rows of a 2-D table; repeated indices accumulate gradient."""
    index = np.asarray(index, dtype=np.int64)

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, index, g)
        return (full,)

    return _make(table.data[index], (table,), backward, "take_rows")


def reshape(a: Value, shape: Tuple[int, ...]) -> Value:
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def stop_gradient(v: Union[Value, ArrayLike]) -> Value:
    """Forward identity, backward zero: the returned node has no parents."""
    data = v.data if isinstance(v, Value) else np.asarray(v, dtype=np.float64)
    return Value(data, op="stop_gradient")


def _topological_order(root: Value) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.node_id in seen:
            continue
        seen.add(node.node_id)
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and parent.node_id not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Value, params=None) -> Dict[str, np.ndarray]:
    """
    Back-propagate a scalar loss through the recorded graph.

    Args:
        loss (Value): scalar node
        params (Optional[ParamStore]): when given, the gradient of every named
            parameter is returned (zeros for parameters the loss does not reach)

    Returns:
        Dict[str, np.ndarray]: gradient per parameter name, empty without params

    Raises:
        ShapeError: if the loss is not a scalar
        NonFiniteError: if any gradient is NaN/Inf
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")

    grads: Dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    if loss.requires_grad:
        for node in reversed(_topological_order(loss)):
            g = grads.get(node.node_id)
            if g is None:
                continue
            node.grad = g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if parent.node_id in grads:
                    grads[parent.node_id] = grads[parent.node_id] + pg
                else:
                    grads[parent.node_id] = pg

    if params is None:
        return {}

    result = {}
    for name, param in params.items():
        g = grads.get(param.node_id)
        g = np.zeros_like(param.data) if g is None else np.array(g, dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"Non-finite gradient for parameter '{name}'")
        param.grad = g
        result[name] = g
    return result
