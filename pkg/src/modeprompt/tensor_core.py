"""Dense matrix / order-3 tensor arithmetic and the attention primitive.

Conventions used throughout the package:

* Matrices are 2-D float64 ``numpy`` arrays with row-major semantics.
* Vectors are 1-D float64 arrays.
* Order-3 tensors are float64 arrays of shape ``(d1, d2, d3)``.  Their
  canonical *linear* entry order puts the first index fastest, then the
  second, then the third (Fortran ravel); ``tensor3_from_flat`` and
  ``tensor3_to_flat`` convert between the two views and checkpoints store
  tensors in that order.
* ``mode_unfold(T, k)`` uses 1-based modes.  Rows are indexed by mode ``k``;
  columns enumerate the two remaining modes in ascending-mode order with the
  lower mode varying fastest.  This column order is part of the contract and
  ``mode_refold`` inverts it exactly.

Matrix products delegate to numpy/BLAS.  For fixed shapes the summation
order is fixed by the BLAS build, so repeated runs on one machine are
bit-identical; tests that compare against naive loop oracles use a 1e-12
absolute tolerance rather than exact equality.
"""

from __future__ import annotations

import math

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes violate an operation's contract."""


def as_matrix(a) -> np.ndarray:
    """Validate and return ``a`` as a 2-D float64 array with finite entries."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if not np.isfinite(m).all():
        raise ValueError("matrix entries must be finite")
    return m


def as_vector(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 1:
        raise ShapeError(f"expected a 1-D vector, got ndim={m.ndim}")
    if not np.isfinite(m).all():
        raise ValueError("vector entries must be finite")
    return m


def as_tensor3(a) -> np.ndarray:
    t = np.asarray(a, dtype=np.float64)
    if t.ndim != 3:
        raise ShapeError(f"expected an order-3 tensor, got ndim={t.ndim}")
    if not np.isfinite(t).all():
        raise ValueError("tensor entries must be finite")
    return t


def tensor3_from_flat(values, d1: int, d2: int, d3: int) -> np.ndarray:
    """Build a ``(d1, d2, d3)`` tensor from entries in canonical linear order.

    The linear order runs the first index fastest:
    ``linear = i + j*d1 + k*d1*d2``.
    """
    flat = np.asarray(values, dtype=np.float64)
    if flat.size != d1 * d2 * d3:
        raise ShapeError(f"got {flat.size} entries for shape ({d1},{d2},{d3})")
    return flat.reshape((d1, d2, d3), order="F")


def tensor3_to_flat(t: np.ndarray) -> np.ndarray:
    """Inverse of :func:`tensor3_from_flat` (first index fastest)."""
    return np.ravel(t, order="F")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Standard matrix product with an explicit shape check."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stabilized by subtracting each row's maximum."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"softmax_rows needs a 2-D matrix, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError("softmax_rows requires finite entries")
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def scaled_dot_attention(xq, xk, xv, wq, wk, wv) -> np.ndarray:
    """Softmax((Xq Wq)(Xk Wk)^T / sqrt(d)) (Xv Wv) with d x d projections."""
    xq, xk, xv = (np.asarray(x, dtype=np.float64) for x in (xq, xk, xv))
    wq, wk, wv = (np.asarray(w, dtype=np.float64) for w in (wq, wk, wv))
    d = wq.shape[0]
    for name, w in (("wq", wq), ("wk", wk), ("wv", wv)):
        if w.shape != (d, d):
            raise ShapeError(f"{name} must be square d x d, got {w.shape}")
    for name, x in (("xq", xq), ("xk", xk), ("xv", xv)):
        if x.ndim != 2 or x.shape[1] != d:
            raise ShapeError(f"{name} must have {d} columns, got shape {x.shape}")
    if xk.shape[0] != xv.shape[0]:
        raise ShapeError(
            f"key/value row counts differ: {xk.shape} vs {xv.shape}"
        )
    q = matmul(xq, wq)
    k = matmul(xk, wk)
    v = matmul(xv, wv)
    scores = matmul(q, k.T) / math.sqrt(d)
    return matmul(softmax_rows(scores), v)


def outer3(u, v, p) -> np.ndarray:
    """Rank-one order-3 tensor: entry (i, j, k) = u_i * v_j * p_k."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    return np.einsum("i,j,k->ijk", u, v, p)


def mode_unfold(t: np.ndarray, k: int) -> np.ndarray:
    """Mode-k matricization (k in {1, 2, 3}).

    Row index is the mode-k index.  Column ``c`` enumerates the remaining
    modes (a, b) with a < b as ``c = i_a + i_b * d_a``: the lower remaining
    mode varies fastest.
    """
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 3:
        raise ShapeError(f"mode_unfold needs an order-3 tensor, got {t.shape}")
    if k not in (1, 2, 3):
        raise ValueError(f"mode index must be 1, 2 or 3, got {k}")
    moved = np.moveaxis(t, k - 1, 0)
    return moved.reshape(t.shape[k - 1], -1, order="F")


def mode_refold(m: np.ndarray, k: int, shape: tuple[int, int, int]) -> np.ndarray:
    """Exact inverse of :func:`mode_unfold` for the given tensor shape."""
    m = np.asarray(m, dtype=np.float64)
    if k not in (1, 2, 3):
        raise ValueError(f"mode index must be 1, 2 or 3, got {k}")
    d1, d2, d3 = shape
    rest = [s for i, s in enumerate(shape) if i != k - 1]
    if m.shape != (shape[k - 1], rest[0] * rest[1]):
        raise ShapeError(
            f"unfolded shape {m.shape} does not match tensor shape {shape} mode {k}"
        )
    moved = m.reshape([shape[k - 1]] + rest, order="F")
    return np.moveaxis(moved, 0, k - 1)


def frobenius(t: np.ndarray) -> float:
    """Frobenius norm, computed as the Euclidean norm of the canonical
    linear entry list (identical summation order)."""
    flat = tensor3_to_flat(np.asarray(t, dtype=np.float64))
    return math.sqrt(float(np.dot(flat, flat)))
