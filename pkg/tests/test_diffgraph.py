import math

import numpy as np
import pytest

from HyperAspect import diffgraph as dg
from HyperAspect.exceptions import DomainError, GraphError


def test_arcosh_derivative():
    graph = dg.Graph()
    x = graph.parameter("x", 2.0)
    grads = graph.backward(dg.arcosh(x))
    assert grads["x"] == pytest.approx(1.0 / math.sqrt(3.0), abs=1e-12)


def test_dot_gradient_is_other_operand():
    graph = dg.Graph()
    a = graph.parameter("a", [1.0, 2.0, 3.0])
    b = np.array([0.5, -1.0, 4.0])
    graph.backward(dg.dot(a, b))
    np.testing.assert_array_equal(a.grad, b)


def test_hinge_gradient_at_and_below_kink():
    for value in (-1.0, 0.0):
        graph = dg.Graph()
        x = graph.parameter("x", value)
        graph.backward(dg.hinge(x))
        assert x.grad == 0.0


def test_backward_of_simple_roots():
    graph = dg.Graph()
    p = graph.parameter("p", 1.5)
    assert graph.backward(p)["p"] == 1.0

    graph = dg.Graph()
    p = graph.parameter("p", 1.5)
    assert graph.backward(3.0 * p)["p"] == 3.0


def test_backward_rejects_non_scalar_root():
    graph = dg.Graph()
    p = graph.parameter("p", [1.0, 2.0])
    with pytest.raises(GraphError):
        graph.backward(p * 2.0)


def test_backward_rejects_foreign_root():
    first, second = dg.Graph(), dg.Graph()
    p = first.parameter("p", 1.0)
    with pytest.raises(GraphError):
        second.backward(p)


def test_duplicate_parameter_name():
    graph = dg.Graph()
    graph.parameter("p", 1.0)
    with pytest.raises(GraphError):
        graph.parameter("p", 2.0)


def test_mixing_graphs_fails():
    a = dg.Graph().parameter("a", 1.0)
    b = dg.Graph().parameter("b", 1.0)
    with pytest.raises(GraphError):
        a + b


def test_domain_errors():
    with pytest.raises(DomainError):
        dg.artanh(np.array(1.0))
    with pytest.raises(DomainError):
        dg.arcosh(np.array(0.5))
    with pytest.raises(DomainError):
        dg.log(np.array([1.0, 0.0]))
    with pytest.raises(DomainError):
        dg.sqrt(np.array(-1.0))


def test_primitives_accept_plain_arrays():
    x = np.array([0.1, -0.2])
    out = dg.tanh(x)
    assert isinstance(out, np.ndarray)
    np.testing.assert_array_equal(out, np.tanh(x))
    assert not isinstance(dg.sum_(x * x), dg.Node)


def test_primitive_registry():
    names = dg.primitives()
    for name in ("add", "dot", "norm", "artanh", "arcosh", "hinge", "softmax", "amin"):
        assert name in names


def test_gradient_check_of_squared_norm():
    x = np.array([0.5, -1.2, 2.0])
    assert dg.gradient_check(lambda p: dg.sum_(p * p), x) < 1e-8


def test_gradient_check_rejects_bad_step():
    with pytest.raises(DomainError):
        dg.gradient_check(lambda p: dg.sum_(p), np.ones(2), h=0.0)


def test_gradients_are_linear():
    x = np.array([0.3, -0.7, 1.1])
    w = np.array([1.0, 2.0, -0.5])

    def grad_of(build):
        graph = dg.Graph()
        p = graph.parameter("p", x)
        return graph.backward(build(p))["p"].copy()

    f = lambda p: dg.sum_(dg.tanh(p) * w)
    g = lambda p: dg.sum_(dg.exp(p))
    combined = grad_of(lambda p: 2.5 * f(p) - 0.75 * g(p))
    np.testing.assert_allclose(combined, 2.5 * grad_of(f) - 0.75 * grad_of(g), atol=1e-12)


def test_backward_is_deterministic():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 3))

    def run():
        graph = dg.Graph()
        p = graph.parameter("p", x)
        loss = dg.sum_(dg.softmax(dg.matvec(p[:3], p)) * dg.norm(p, keepdims=True))
        return graph.backward(loss)["p"]

    assert np.array_equal(run(), run())


def test_elementwise_and_reduction_gradients():
    rng = np.random.default_rng(1)
    w = rng.normal(size=(3, 4))
    checks = [
        lambda p: dg.sum_(dg.softmax(p) * w),
        lambda p: dg.sum_(dg.softmax(p, axis=0) * w),
        lambda p: dg.sum_(dg.norm(p) * w[:, 0]),
        lambda p: dg.sum_(dg.amin(p) * w[:, 1]),
        lambda p: dg.sum_(dg.tanh(p) * dg.exp(0.3 * p)),
        lambda p: dg.sum_(dg.power(dg.exp(p), 1.5) / (2.0 + p * p)),
        lambda p: dg.mean(dg.dot(p, w)),
        lambda p: dg.sum_(dg.matvec(p[:, :3], w[:, :3]) * w[:, :3]),
        lambda p: dg.sum_(dg.artanh(0.4 * dg.tanh(p)) * w),
        lambda p: dg.sum_(dg.arcosh(2.0 + p * p) * w),
        lambda p: dg.sum_(dg.log(1.5 + dg.tanh(p))),
        lambda p: dg.sum_(dg.sqrt(1.0 + p * p) * w),
        lambda p: dg.sum_(p[np.array([0, 2, 2])] * w),
        lambda p: dg.sum_(dg.reshape(p, (4, 3)) * w.T),
        lambda p: dg.sum_(dg.expand_dims(p, 0) * w),
        lambda p: dg.sum_(dg.hinge(p + 5.0) * w),
        lambda p: dg.sum_(dg.clamp(p, lo=-10.0, hi=10.0) * w),
    ]
    x = rng.normal(size=(3, 4))
    for f in checks:
        assert dg.gradient_check(f, x) < 1e-4


def test_softmax_mask_zeroes_entries():
    probs = dg.softmax(np.array([[1.0, 2.0, 3.0]]), mask=np.array([[True, True, False]]))
    assert probs[0, 2] == 0.0
    assert probs.sum() == pytest.approx(1.0)


def test_index_gradient_accumulates_repeats():
    graph = dg.Graph()
    table = graph.parameter("table", np.zeros((3, 2)))
    graph.backward(dg.sum_(table[np.array([1, 1, 2])]))
    np.testing.assert_array_equal(table.grad, [[0.0, 0.0], [2.0, 2.0], [1.0, 1.0]])
