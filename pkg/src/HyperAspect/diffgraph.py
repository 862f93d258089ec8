"""
Reverse-mode automatic differentiation over numpy arrays.

A :class:`Graph` is a tape: every primitive applied to a :class:`Node`
appends its result to the tape together with a vector-Jacobian product
closure, and :meth:`Graph.backward` replays the tape in reverse.

Every primitive in this module also accepts plain numpy arrays. When none
of its arguments is a Node it simply returns the numpy result, so the
formulas in ``geometry``, ``model`` and ``training`` are written once and run
both with and without a tape.
"""

import numpy as np

from .exceptions import DomainError, GraphError


class Node:
    """A value recorded on a :class:`Graph` together with its gradient."""

    # numpy must hand mixed ndarray/Node arithmetic to the reflected operators
    __array_ufunc__ = None
    __slots__ = ("graph", "value", "grad", "parents", "op", "vjp", "name")

    def __init__(self, graph, value, parents=(), op="leaf", vjp=None, name=None):
        self.graph = graph
        self.value = value
        self.grad = np.zeros_like(value)
        self.parents = parents
        self.op = op
        self.vjp = vjp
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        label = self.name or self.op
        return f"Node({label}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    def __rmul__(self, other):
        return multiply(other, self)

    def __truediv__(self, other):
        return divide(self, other)

    def __rtruediv__(self, other):
        return divide(other, self)

    def __neg__(self):
        return negative(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, key):
        return index(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


class Graph:
    """
    Tape of nodes in creation order plus a registry of trainable leaves.

    A fresh graph is built for every forward pass and dropped after
    :meth:`backward`. A graph must only be used from one thread.
    """

    def __init__(self):
        self.nodes = []
        self.params = {}

    def parameter(self, name, value):
        """Register a trainable leaf under ``name``."""
        if name in self.params:
            raise GraphError(f"Parameter '{name}' is already registered")
        node = self._emit(np.asarray(value, dtype=np.float64), (), "parameter", None)
        node.name = name
        self.params[name] = node
        return node

    def constant(self, value, name=None):
        """Record a non-trainable leaf."""
        node = self._emit(np.array(value, dtype=np.float64), (), "constant", None)
        node.name = name
        return node

    def _emit(self, value, parents, op, vjp):
        node = Node(self, value, parents, op, vjp)
        self.nodes.append(node)
        return node

    def backward(self, root):
        """
        Accumulate d(root)/d(node) into every node's ``grad``.

        Args:
            root (Node): A scalar node recorded on this graph

        Returns:
            dict: Parameter name -> gradient array

        Raises:
            GraphError: If ``root`` is not a scalar node of this graph
        """
        if not isinstance(root, Node) or root.graph is not self:
            raise GraphError("backward() needs a node recorded on this graph")
        if root.value.size != 1:
            raise GraphError(
                f"backward() needs a scalar root, got shape {root.value.shape}"
            )
        for node in self.nodes:
            node.grad = np.zeros_like(node.value)
        root.grad = np.ones_like(root.value)

        for node in reversed(self.nodes):
            if node.vjp is None or not node.grad.any():
                continue
            parent_grads = node.vjp(node.grad)
            for parent, parent_grad in zip(node.parents, parent_grads):
                if isinstance(parent, Node) and parent_grad is not None:
                    parent.grad += _unbroadcast(parent_grad, parent.value.shape)
        return self.gradients()

    def gradients(self):
        """Return the current gradient table of the registered parameters."""
        return {name: node.grad for name, node in self.params.items()}


# --- helpers ---


def value_of(x):
    """The numpy value behind ``x`` (a Node or anything array-like)."""
    if isinstance(x, Node):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _graph_of(*args):
    graph = None
    for arg in args:
        if isinstance(arg, Node):
            if graph is None:
                graph = arg.graph
            elif arg.graph is not graph:
                raise GraphError("Operands belong to different graphs")
    return graph


def _unbroadcast(grad, shape):
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape == shape:
        return grad
    if grad.ndim < len(shape):
        grad = np.broadcast_to(grad, shape)
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _safe_divide(num, den):
    num, den = np.broadcast_arrays(np.asarray(num, dtype=np.float64), den)
    return np.divide(num, den, out=np.zeros(num.shape), where=den != 0)


# --- arithmetic ---


def add(a, b):
    graph = _graph_of(a, b)
    out = value_of(a) + value_of(b)
    if graph is None:
        return out
    return graph._emit(out, (a, b), "add", lambda g: (g, g))


def subtract(a, b):
    graph = _graph_of(a, b)
    out = value_of(a) - value_of(b)
    if graph is None:
        return out
    return graph._emit(out, (a, b), "subtract", lambda g: (g, -g))


def negative(a):
    graph = _graph_of(a)
    out = -value_of(a)
    if graph is None:
        return out
    return graph._emit(out, (a,), "negative", lambda g: (-g,))


def multiply(a, b):
    """Elementwise (and scalar) multiplication with broadcasting."""
    graph = _graph_of(a, b)
    va, vb = value_of(a), value_of(b)
    out = va * vb
    if graph is None:
        return out
    return graph._emit(out, (a, b), "multiply", lambda g: (g * vb, g * va))


def divide(a, b):
    graph = _graph_of(a, b)
    va, vb = value_of(a), value_of(b)
    out = va / vb
    if graph is None:
        return out
    return graph._emit(
        out, (a, b), "divide", lambda g: (g / vb, -g * va / (vb * vb))
    )


def power(a, exponent):
    """``a ** exponent`` for a constant real exponent."""
    graph = _graph_of(a)
    va = value_of(a)
    out = va**exponent
    if graph is None:
        return out
    return graph._emit(
        out, (a,), "power", lambda g: (g * exponent * va ** (exponent - 1),)
    )


def dot(a, b):
    """Inner product over the last axis."""
    graph = _graph_of(a, b)
    va, vb = value_of(a), value_of(b)
    out = np.sum(va * vb, axis=-1)
    if graph is None:
        return out

    def vjp(g):
        g = g[..., None]
        return g * vb, g * va

    return graph._emit(out, (a, b), "dot", vjp)


def matvec(m, x):
    """``M @ x`` applied to the last axis of ``x``; ``M`` is (k, d)."""
    graph = _graph_of(m, x)
    vm, vx = value_of(m), value_of(x)
    out = vx @ vm.T
    if graph is None:
        return out

    def vjp(g):
        k, d = vm.shape
        vx_b = np.broadcast_to(vx, g.shape[:-1] + (d,))
        grad_m = g.reshape(-1, k).T @ vx_b.reshape(-1, d)
        return grad_m, g @ vm

    return graph._emit(out, (m, x), "matvec", vjp)


# --- reductions and shape ---


def sum_(a, axis=None, keepdims=False):
    graph = _graph_of(a)
    va = value_of(a)
    out = np.sum(va, axis=axis, keepdims=keepdims)
    if graph is None:
        return out

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, va.shape),)

    return graph._emit(out, (a,), "sum", vjp)


def mean(a, axis=None, keepdims=False):
    total = sum_(a, axis=axis, keepdims=keepdims)
    count = value_of(a).size / max(np.size(value_of(total)), 1)
    return total * (1.0 / count)


def norm(a, axis=-1, keepdims=False):
    """Euclidean norm; its gradient at the zero vector is taken as 0."""
    graph = _graph_of(a)
    va = value_of(a)
    n = np.sqrt(np.sum(va * va, axis=axis, keepdims=True))
    out = n if keepdims else np.squeeze(n, axis=axis)
    if graph is None:
        return out

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * _safe_divide(va, n),)

    return graph._emit(out, (a,), "norm", vjp)


def amin(a, axis=-1):
    """Minimum along ``axis``; the gradient goes to the first arg-min."""
    graph = _graph_of(a)
    va = value_of(a)
    out = np.min(va, axis=axis)
    if graph is None:
        return out

    def vjp(g):
        where = np.expand_dims(np.argmin(va, axis=axis), axis)
        grad = np.zeros_like(va)
        np.put_along_axis(grad, where, np.expand_dims(g, axis), axis=axis)
        return (grad,)

    return graph._emit(out, (a,), "amin", vjp)


def reshape(a, shape):
    graph = _graph_of(a)
    va = value_of(a)
    out = va.reshape(shape)
    if graph is None:
        return out
    return graph._emit(out, (a,), "reshape", lambda g: (g.reshape(va.shape),))


def expand_dims(a, axis):
    shape = list(value_of(a).shape)
    position = axis if axis >= 0 else len(shape) + axis + 1
    shape.insert(position, 1)
    return reshape(a, tuple(shape))


def index(a, key):
    """``a[key]`` with a scatter-add backward (gather from a table)."""
    graph = _graph_of(a)
    va = value_of(a)
    out = va[key]
    if graph is None:
        return out

    def vjp(g):
        grad = np.zeros_like(va)
        np.add.at(grad, key, g)
        return (grad,)

    return graph._emit(np.array(out, dtype=np.float64), (a,), "index", vjp)


# --- elementwise functions ---


def exp(a):
    graph = _graph_of(a)
    out = np.exp(value_of(a))
    if graph is None:
        return out
    return graph._emit(out, (a,), "exp", lambda g: (g * out,))


def log(a):
    graph = _graph_of(a)
    va = value_of(a)
    if np.any(va <= 0):
        raise DomainError("log() needs strictly positive arguments")
    out = np.log(va)
    if graph is None:
        return out
    return graph._emit(out, (a,), "log", lambda g: (g / va,))


def sqrt(a):
    graph = _graph_of(a)
    va = value_of(a)
    if np.any(va < 0):
        raise DomainError("sqrt() needs non-negative arguments")
    out = np.sqrt(va)
    if graph is None:
        return out
    return graph._emit(out, (a,), "sqrt", lambda g: (_safe_divide(0.5 * g, out),))


def tanh(a):
    graph = _graph_of(a)
    out = np.tanh(value_of(a))
    if graph is None:
        return out
    return graph._emit(out, (a,), "tanh", lambda g: (g * (1.0 - out * out),))


def artanh(a):
    graph = _graph_of(a)
    va = value_of(a)
    if np.any(np.abs(va) >= 1.0):
        raise DomainError("artanh() needs arguments with |x| < 1")
    out = np.arctanh(va)
    if graph is None:
        return out
    return graph._emit(out, (a,), "artanh", lambda g: (g / (1.0 - va * va),))


def arcosh(a):
    """Inverse hyperbolic cosine; the derivative at exactly 1 is taken as 0."""
    graph = _graph_of(a)
    va = value_of(a)
    if np.any(va < 1.0):
        raise DomainError("arcosh() needs arguments >= 1")
    out = np.arccosh(va)
    if graph is None:
        return out
    slope = np.sqrt(va * va - 1.0)
    return graph._emit(out, (a,), "arcosh", lambda g: (_safe_divide(g, slope),))


def hinge(a):
    """``max(0, a)`` with subgradient 0 at the kink."""
    graph = _graph_of(a)
    va = value_of(a)
    out = np.maximum(va, 0.0)
    if graph is None:
        return out
    return graph._emit(out, (a,), "hinge", lambda g: (g * (va > 0.0),))


def clamp(a, lo=None, hi=None):
    """Clip to ``[lo, hi]``; the gradient is 0 wherever a bound is active."""
    graph = _graph_of(a)
    va = value_of(a)
    out = np.clip(va, lo, hi)
    if graph is None:
        return out
    inside = np.ones(va.shape, dtype=bool)
    if lo is not None:
        inside &= va > lo
    if hi is not None:
        inside &= va < hi
    return graph._emit(out, (a,), "clamp", lambda g: (g * inside,))


def softmax(a, axis=-1, mask=None):
    """
    Softmax along ``axis``. Entries where ``mask`` is False get probability 0.
    """
    graph = _graph_of(a)
    va = value_of(a)
    if mask is not None:
        va = np.where(mask, va, -np.inf)
    shifted = np.exp(va - np.max(va, axis=axis, keepdims=True))
    out = shifted / np.sum(shifted, axis=axis, keepdims=True)
    if graph is None:
        return out

    def vjp(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return graph._emit(out, (a,), "softmax", vjp)


PRIMITIVES = frozenset(
    {
        "add", "subtract", "negative", "multiply", "divide", "power", "dot",
        "matvec", "sum", "norm", "amin", "reshape", "index", "exp", "log",
        "sqrt", "tanh", "artanh", "arcosh", "hinge", "clamp", "softmax",
    }
)


def primitives():
    """Names of the differentiable primitives this module provides."""
    return PRIMITIVES


def gradient_check(f, x, h=1e-5):
    """
    Compare the tape gradient of ``f`` with central finite differences.

    Args:
        f (callable): Scalar function of one array argument, written with the
            primitives of this module
        x (array-like): Point at which to compare
        h (float): Finite-difference step

    Returns:
        float: max over coordinates of
            |analytic - numeric| / max(1e-8, |numeric|)

    Raises:
        DomainError: If ``h`` is not positive or ``f`` is not finite near ``x``
    """
    if h <= 0:
        raise DomainError("gradient_check() needs a positive step")
    x = np.array(x, dtype=np.float64)

    graph = Graph()
    param = graph.parameter("x", x.copy())
    out = f(param)
    if isinstance(out, Node):
        graph.backward(out)
        analytic = param.grad.copy()
    else:
        analytic = np.zeros_like(x)

    numeric = np.zeros_like(x)
    for position in np.ndindex(x.shape):
        shifted = x.copy()
        shifted[position] = x[position] + h
        f_plus = float(value_of(f(shifted)))
        shifted[position] = x[position] - h
        f_minus = float(value_of(f(shifted)))
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise DomainError(f"f is not finite near x at coordinate {position}")
        numeric[position] = (f_plus - f_minus) / (2.0 * h)

    if not np.all(np.isfinite(analytic)):
        raise DomainError("Analytic gradient is not finite")
    error = np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(numeric))
    return float(np.max(error)) if error.size else 0.0
