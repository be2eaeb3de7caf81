import numpy as np
import pytest

from core.params import ParamStore
from core.value import Value, backward, concat, no_grad, silu, sqrt, square, stop_gradient, take_rows
from utils.exceptions import NonFiniteError, ShapeError


def numeric_grad(fn, x, step=1e-6):
    grad = np.zeros_like(x)
    for index in np.ndindex(x.shape):
        plus, minus = x.copy(), x.copy()
        plus[index] += step
        minus[index] -= step
        grad[index] = (fn(plus) - fn(minus)) / (2 * step)
    return grad


@pytest.mark.parametrize(
    "build",
    [
        lambda a, b: (a * b + a / (b * b + 1.0)).sum(),
        lambda a, b: square(a - b).mean(),
        lambda a, b: silu(a * 3.0).sum() + sqrt(square(b) + 1.0).sum(),
        lambda a, b: (concat([a, b], axis=1) * 2.0).sum(),
    ],
)
def test_elementwise_gradients_match_central_differences(build):
    rng = np.random.default_rng(1)
    a_data, b_data = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
    a, b = Value(a_data, requires_grad=True), Value(b_data, requires_grad=True)
    backward(build(a, b))

    def as_float(a_arr):
        with no_grad():
            return float(build(Value(a_arr), Value(b_data)).data)

    np.testing.assert_allclose(a.grad, numeric_grad(as_float, a_data), rtol=1e-6, atol=1e-8)


def test_matmul_gradient_and_broadcast_bias():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((5, 3))
    w = Value(rng.standard_normal((3, 2)), requires_grad=True)
    b = Value(rng.standard_normal((1, 2)), requires_grad=True)
    backward(square(Value(x) @ w + b).sum())

    out = x @ w.data + b.data
    np.testing.assert_allclose(w.grad, x.T @ (2 * out))
    np.testing.assert_allclose(b.grad, (2 * out).sum(axis=0, keepdims=True))


def test_take_rows_accumulates_repeated_indices():
    table = Value(np.arange(6.0).reshape(3, 2), requires_grad=True)
    backward(take_rows(table, np.array([0, 2, 0])).sum())
    np.testing.assert_array_equal(table.grad, [[2.0, 2.0], [0.0, 0.0], [1.0, 1.0]])


def test_stop_gradient_is_forward_identity_and_blocks_backward():
    p = Value(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    detached = stop_gradient(p)
    backward((detached * p).sum())
    np.testing.assert_array_equal(detached.data, p.data)
    np.testing.assert_array_equal(p.grad, p.data)
    assert not detached.requires_grad


def test_no_grad_records_no_graph():
    p = Value(np.ones(3), requires_grad=True)
    with no_grad():
        out = (p * 2.0).sum()
    assert not out.requires_grad
    assert (p * 2.0).requires_grad


def test_non_finite_forward_value_raises():
    with pytest.raises(NonFiniteError):
        Value(np.array([1.0, np.nan]))
    with pytest.raises(NonFiniteError):
        Value(np.array([1.0])) / Value(np.array([0.0]))


def test_backward_needs_scalar_loss():
    p = Value(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        backward(p * 2.0)


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        Value(np.ones((2, 3))) @ Value(np.ones((2, 3)))


def test_backward_returns_zero_gradient_for_unreached_parameters():
    store = ParamStore()
    used = store.add("used", np.array([2.0]))
    store.add("unused", np.array([5.0, 6.0]))
    grads = backward((used * used).sum(), store)
    np.testing.assert_array_equal(grads["used"], [4.0])
    np.testing.assert_array_equal(grads["unused"], [0.0, 0.0])


def test_shared_subexpression_gradients_add_up():
    p = Value(np.array([3.0]), requires_grad=True)
    q = p * p
    backward((q + q * 2.0).sum())
    np.testing.assert_allclose(p.grad, [18.0])
