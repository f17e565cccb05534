"""Minimal reverse-mode automatic differentiation over numpy arrays.

A :class:`Var` wraps a float64 array and records the closure needed to push
gradients to its parents.  The module-level helpers (``softmax_rows``,
``tanh``, ``rows``, ...) dispatch on type: given plain ndarrays they run the
numpy fast path, given ``Var`` operands they extend the graph.  Model code is
therefore written once and serves both gradient computation and plain
evaluation (used e.g. by finite-difference checks).

Both paths call the same underlying numpy routines, so the value computed
through a graph is bit-identical to the plain evaluation.

Gradient accumulation walks a topological order of the graph, which is a
fixed, documented reduction order: summed gradients are accumulated in the
reverse of node-creation order.
"""

from __future__ import annotations

import numpy as np

from . import tensor_core


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverses numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Var:
    """Node in the computation graph."""

    __slots__ = ("data", "grad", "parents", "_backward", "requires_grad")

    # keep numpy from intercepting ndarray <op> Var
    __array_ufunc__ = None

    def __init__(self, data, parents=(), backward=None, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self._backward = backward
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        return f"Var(shape={self.data.shape})"

    # arithmetic -----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            start, stop, step = idx.indices(self.data.shape[0])
            if step != 1:
                raise ValueError("only contiguous row slices are supported")
            return rows(self, start, stop)
        raise TypeError("Var indexing supports contiguous row slices only")

    # backward -------------------------------------------------------------

    def backward(self):
        """Seed d(self)/d(self) = 1 and accumulate gradients on all leaves."""
        if self.data.shape not in ((), (1,), (1, 1)):
            raise ValueError("backward() expects a scalar loss node")
        order: list[Var] = []
        seen: set[int] = set()
        stack: list[tuple[Var, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            for parent, g in zip(node.parents, node._backward(node.grad)):
                if g is None:
                    continue
                if parent.grad is None:
                    parent.grad = g
                else:
                    parent.grad = parent.grad + g


def _to_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _any_var(*xs) -> bool:
    return any(isinstance(x, Var) for x in xs)


# -- elementwise arithmetic with broadcasting ------------------------------


def add(a, b):
    if not _any_var(a, b):
        return np.add(a, b)
    a, b = _to_var(a), _to_var(b)
    return Var(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def sub(a, b):
    if not _any_var(a, b):
        return np.subtract(a, b)
    a, b = _to_var(a), _to_var(b)
    return Var(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
    )


def mul(a, b):
    if not _any_var(a, b):
        return np.multiply(a, b)
    a, b = _to_var(a), _to_var(b)
    return Var(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def div(a, b):
    if not _any_var(a, b):
        return np.divide(a, b)
    a, b = _to_var(a), _to_var(b)
    out = a.data / b.data
    return Var(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * out / b.data, b.data.shape),
        ),
    )


def matmul(a, b):
    if not _any_var(a, b):
        return a @ b
    a, b = _to_var(a), _to_var(b)
    return Var(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def transpose(a):
    if not isinstance(a, Var):
        return np.transpose(a)
    return Var(a.data.T, (a,), lambda g: (g.T,))


# -- shape ops -------------------------------------------------------------


def rows(a, start: int, stop: int):
    """Contiguous row slice ``a[start:stop]``."""
    if not isinstance(a, Var):
        return a[start:stop]

    def backward(g):
        out = np.zeros_like(a.data)
        out[start:stop] = g
        return (out,)

    return Var(a.data[start:stop], (a,), backward)


def concat_rows(parts):
    """Stack 2-D blocks along axis 0."""
    if not _any_var(*parts):
        return np.concatenate(list(parts), axis=0)
    parts = [_to_var(p) for p in parts]
    sizes = [p.data.shape[0] for p in parts]

    def backward(g):
        grads = []
        off = 0
        for n in sizes:
            grads.append(g[off : off + n])
            off += n
        return tuple(grads)

    return Var(np.concatenate([p.data for p in parts], axis=0), tuple(parts), backward)


def pick(a, row_idx, col_idx):
    """Gather ``a[row_idx[i], col_idx[i]]`` as an (n, 1) column."""
    row_idx = np.asarray(row_idx, dtype=np.intp)
    col_idx = np.asarray(col_idx, dtype=np.intp)
    if not isinstance(a, Var):
        return a[row_idx, col_idx][:, None]

    def backward(g):
        out = np.zeros_like(a.data)
        np.add.at(out, (row_idx, col_idx), g[:, 0])
        return (out,)

    return Var(a.data[row_idx, col_idx][:, None], (a,), backward)


def sum_all(a):
    if not isinstance(a, Var):
        return np.sum(a)
    return Var(np.sum(a.data), (a,), lambda g: (np.broadcast_to(g, a.data.shape).copy(),))


def mean_all(a):
    n = a.data.size if isinstance(a, Var) else np.asarray(a).size
    return sum_all(a) * (1.0 / n)


# -- nonlinearities --------------------------------------------------------


def tanh(a):
    if not isinstance(a, Var):
        return np.tanh(a)
    out = np.tanh(a.data)
    return Var(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a):
    def _sig(x):
        return 1.0 / (1.0 + np.exp(-x))

    if not isinstance(a, Var):
        return _sig(a)
    out = _sig(a.data)
    return Var(out, (a,), lambda g: (g * out * (1.0 - out),))


def sqrt(a):
    if not isinstance(a, Var):
        return np.sqrt(a)
    out = np.sqrt(a.data)
    return Var(out, (a,), lambda g: (g * 0.5 / out,))


def softmax_rows(a):
    if not isinstance(a, Var):
        return tensor_core.softmax_rows(a)
    out = tensor_core.softmax_rows(a.data)

    def backward(g):
        dot = (g * out).sum(axis=1, keepdims=True)
        return (out * (g - dot),)

    return Var(out, (a,), backward)


def _lse_rows(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=1, keepdims=True)
    return m + np.log(np.exp(x - m).sum(axis=1, keepdims=True))


def logsumexp_rows(a):
    """Row-wise log-sum-exp, returned as a (B, 1) column."""
    if not isinstance(a, Var):
        return _lse_rows(np.asarray(a, dtype=np.float64))
    out = _lse_rows(a.data)
    soft = tensor_core.softmax_rows(a.data)
    return Var(out, (a,), lambda g: (g * soft,))


def value(x) -> np.ndarray:
    """Underlying array of a Var, or the array itself."""
    return x.data if isinstance(x, Var) else np.asarray(x)
