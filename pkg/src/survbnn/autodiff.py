"""A small reverse-mode automatic differentiation tape over numpy arrays.

Only the operations needed by the survival network and its log joint density
are supported: affine maps, tanh, sigmoid, exp, log, square, sum, mean, the
normal log density, elementwise arithmetic and slicing of a flat parameter
vector. Every operation records a vector-Jacobian product on the output node;
``backward`` replays them in reverse topological order.
"""

from __future__ import annotations

import numpy as np

LOG_2PI = np.log(2.0 * np.pi)


class NonFiniteError(FloatingPointError):
    """Raised when an objective or its gradient is not finite."""


class Var:
    """A node on the tape holding a value and, after ``backward``, a gradient."""

    __slots__ = ("value", "grad", "parents")

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self.parents = parents  # tuple of (Var, vjp)

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_var(other)))

    def __rsub__(self, other):
        return add(as_var(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __getitem__(self, idx):
        return take(self, idx)

    def __repr__(self):
        return f"Var({self.value!r})"


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return Var(a.value + b.value,
               ((a, lambda g: _unbroadcast(g, a.shape)), (b, lambda g: _unbroadcast(g, b.shape))))


def neg(a: Var) -> Var:
    return Var(-a.value, ((a, lambda g: -g),))


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    return Var(a.value * b.value,
               ((a, lambda g: _unbroadcast(g * b.value, a.shape)),
                (b, lambda g: _unbroadcast(g * a.value, b.shape))))


def take(a: Var, idx, shape=None) -> Var:
    """``a.value[idx]``, optionally reshaped; used to slice weights from a flat vector."""
    out = a.value[idx]
    out_shape = out.shape if shape is None else shape

    def vjp(g):
        full = np.zeros_like(a.value)
        full[idx] = np.reshape(g, out.shape)  # indices never repeat
        return full

    return Var(out.reshape(out_shape), ((a, vjp),))


def affine(x, W: Var, b: Var) -> Var:
    """``x @ W + b`` for a batch ``x`` of shape (n, in)."""
    x = as_var(x)
    return Var(x.value @ W.value + b.value,
               ((x, lambda g: g @ W.value.T),
                (W, lambda g: x.value.T @ g),
                (b, lambda g: _unbroadcast(g, b.shape))))


def tanh(a: Var) -> Var:
    y = np.tanh(a.value)
    return Var(y, ((a, lambda g: g * (1.0 - y * y)),))


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Var) -> Var:
    y = _sigmoid(np.atleast_1d(a.value)).reshape(a.shape)
    return Var(y, ((a, lambda g: g * y * (1.0 - y)),))


def identity(a: Var) -> Var:
    return a


def exp(a: Var) -> Var:
    y = np.exp(a.value)
    return Var(y, ((a, lambda g: g * y),))


def log(a: Var) -> Var:
    return Var(np.log(a.value), ((a, lambda g: g / a.value),))


def square(a: Var) -> Var:
    return Var(a.value ** 2, ((a, lambda g: 2.0 * g * a.value),))


def sum(a: Var) -> Var:  # noqa: A001 - mirrors numpy naming on purpose
    return Var(a.value.sum(), ((a, lambda g: np.broadcast_to(g, a.shape).copy()),))


def mean(a: Var) -> Var:
    n = a.value.size
    return Var(a.value.mean(), ((a, lambda g: np.broadcast_to(g / n, a.shape).copy()),))


def normal_logpdf(x, mu, sigma) -> Var:
    """Elementwise log density of ``N(mu, sigma^2)`` at ``x``."""
    x, mu, sigma = as_var(x), as_var(mu), as_var(sigma)
    r = x.value - mu.value
    s2 = sigma.value ** 2
    val = -0.5 * LOG_2PI - np.log(sigma.value) - 0.5 * r * r / s2
    return Var(val, (
        (x, lambda g: _unbroadcast(-g * r / s2, x.shape)),
        (mu, lambda g: _unbroadcast(g * r / s2, mu.shape)),
        (sigma, lambda g: _unbroadcast(g * (r * r / (s2 * sigma.value) - 1.0 / sigma.value),
                                       sigma.shape)),
    ))


ACTIVATIONS = {"tanh": tanh, "sigmoid": sigmoid, "identity": identity}


def backward(out: Var) -> None:
    """Accumulate d(out)/d(node) into ``node.grad`` for every node on the tape."""
    order, seen = [], set()
    stack = [(out, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    for node in order:
        node.grad = None
    out.grad = np.ones_like(out.value)
    for node in reversed(order):
        if node.grad is None:
            continue
        for parent, vjp in node.parents:
            g = vjp(node.grad)
            parent.grad = g if parent.grad is None else parent.grad + g


def value_and_grad(objective, params):
    """Evaluate a scalar objective and its gradient at ``params``.

    ``objective`` receives a :class:`Var` wrapping a copy of ``params`` and
    must return a scalar :class:`Var` built from the operations above.
    """
    x = Var(np.array(params, dtype=float, copy=True))
    out = objective(x)
    if out.value.size != 1:
        raise ValueError("objective must be scalar")
    if not np.isfinite(out.value):
        raise NonFiniteError(f"objective is not finite: {float(out.value)}")
    backward(out)
    g = np.zeros_like(x.value) if x.grad is None else x.grad
    return float(out.value), g


def grad_scalar(objective, params) -> np.ndarray:
    """Reverse-mode gradient of a scalar objective with respect to ``params``."""
    return value_and_grad(objective, params)[1]
