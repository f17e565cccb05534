"""CP-factorized low-rank updates to a frozen stack of attention weights.

The frozen model's query/key/value projections are stacked into a single
order-3 tensor ``W0`` of shape ``(d, d, N)``.  The learnable update is never
stored densely: it is the rank-R CP sum

    delta[i, j, k] = sum_r coeffs[k, r] * U[i, r] * V[j, r] * P[k, r]

with ``U, V`` shared globally across every slice, ``P`` covering the slice
axis, and one coefficient row per slice.  ``U`` and ``P`` start Gaussian and
``V`` starts at zero, so the update tensor is exactly zero before training
and the adapted model reproduces the frozen one bit for bit.

Projections are applied on the right, ``X @ (W0_k + delta_k)``, matching the
attention convention used in :mod:`modeprompt.backbone`; a left-multiplying
variant is the transpose relation ``(W X^T)^T = X W^T``.

The efficient forward path (:func:`adapted_projection`) computes
``(X @ U) * s @ V.T`` with ``s = coeffs[k] * P[k]`` in that fixed order, at
O(t d R) cost beyond the frozen product, and never materializes a d x d
update matrix.  ``delta_slice``/``full_delta`` exist for tests and audits.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .rng import Rng

BRANCHES = ("vision", "text", "fusion-self", "fusion-cross")
ROLES = ("q", "k", "v")


@dataclass(frozen=True)
class FrozenStack:
    """Frozen weight tensor plus the (branch, layer, role) -> slice map."""

    w0: np.ndarray  # (d, d, N), never mutated after construction
    index_map: dict  # (branch, layer, role) -> k

    @property
    def d(self) -> int:
        return self.w0.shape[0]

    @property
    def n_slices(self) -> int:
        return self.w0.shape[2]

    def slice_index(self, branch: str, layer: int, role: str) -> int:
        return self.index_map[(branch, layer, role)]

    def validate(self) -> None:
        n = self.n_slices
        if self.w0.shape[0] != self.w0.shape[1]:
            raise ValueError(f"w0 slices must be square, got {self.w0.shape}")
        ks = sorted(self.index_map.values())
        if ks != list(range(n)):
            raise ValueError("index_map must be a bijection onto [0, N)")


def build_index_map(layers_vision: int, layers_text: int, layers_fusion: int) -> dict:
    """Slice layout: vision layers first, then text, then fusion, where each
    fusion layer contributes its self-attention triple before its
    cross-attention triple."""
    index_map = {}
    k = 0
    for layer in range(layers_vision):
        for role in ROLES:
            index_map[("vision", layer, role)] = k
            k += 1
    for layer in range(layers_text):
        for role in ROLES:
            index_map[("text", layer, role)] = k
            k += 1
    for layer in range(layers_fusion):
        for role in ROLES:
            index_map[("fusion-self", layer, role)] = k
            k += 1
        for role in ROLES:
            index_map[("fusion-cross", layer, role)] = k
            k += 1
    return index_map


def stack_size(layers_vision: int, layers_text: int, layers_fusion: int) -> int:
    return 3 * (layers_vision + layers_text) + 6 * layers_fusion


@dataclass
class GlobalFactors:
    """Shared CP factor matrices: U, V over the row/column modes (d x R),
    P over the slice mode (N x R).  V is zero at construction."""

    U: np.ndarray
    V: np.ndarray
    P: np.ndarray

    @property
    def rank(self) -> int:
        return ad.value(self.U).shape[1]


@dataclass
class CoefficientTable:
    """Per-slice coefficient vectors; row k scales the CP components of
    slice k."""

    coeffs: np.ndarray  # (N, R)


def init_adapter(
    d: int, n_slices: int, rank: int, sigma_init: float, seed: int
) -> tuple[GlobalFactors, CoefficientTable]:
    """Draw U, P and the coefficient table i.i.d. N(0, sigma_init^2) from the
    SplitMix64/Box-Muller stream for ``seed``; V starts exactly zero, so the
    update tensor is zero before training."""
    if d < 1 or n_slices < 1 or rank < 1:
        raise ValueError(
            f"dimensions must be positive, got d={d}, N={n_slices}, R={rank}"
        )
    if sigma_init <= 0:
        raise ValueError(f"sigma_init must be positive, got {sigma_init}")
    rng = Rng(seed).fork("adapter-init")
    factors = GlobalFactors(
        U=rng.gauss_array((d, rank), sigma_init),
        V=np.zeros((d, rank)),
        P=rng.gauss_array((n_slices, rank), sigma_init),
    )
    table = CoefficientTable(coeffs=rng.gauss_array((n_slices, rank), sigma_init))
    return factors, table


def _check_slice(n: int, k: int) -> None:
    if not 0 <= k < n:
        raise ValueError(f"slice index {k} out of range [0, {n})")


def delta_slice(
    factors: GlobalFactors, table: CoefficientTable, k: int
) -> np.ndarray:
    """Materialized update for slice k: U @ diag(coeffs[k] * P[k]) @ V.T."""
    n = ad.value(table.coeffs).shape[0]
    _check_slice(n, k)
    scale = ad.rows(table.coeffs, k, k + 1) * ad.rows(factors.P, k, k + 1)
    return (factors.U * scale) @ ad.transpose(factors.V)


def full_delta(factors: GlobalFactors, table: CoefficientTable) -> np.ndarray:
    """Dense (d, d, N) update tensor.  Test/audit aid only; the training
    forward path never materializes this."""
    u, v, p = (ad.value(a) for a in (factors.U, factors.V, factors.P))
    coeffs = ad.value(table.coeffs)
    return np.einsum("ir,jr,kr,kr->ijk", u, v, p, coeffs)


def adapted_projection(x, stack: FrozenStack, factors, table, k: int):
    """Project token rows through the adapted slice k.

    Returns ``x @ W0[:, :, k] + ((x @ U) * s) @ V.T`` with
    ``s = coeffs[k] * P[k]``, accepting autodiff variables for the adapter
    parameters.  The multiplication order is fixed for reproducibility.
    """
    _check_slice(stack.n_slices, k)
    d = stack.d
    if ad.value(x).shape[1] != d:
        raise ValueError(
            f"input has {ad.value(x).shape[1]} columns, expected {d}"
        )
    frozen = x @ stack.w0[:, :, k]
    scale = ad.rows(table.coeffs, k, k + 1) * ad.rows(factors.P, k, k + 1)
    update = ((x @ factors.U) * scale) @ ad.transpose(factors.V)
    return frozen + update


def with_params(
    factors: GlobalFactors, table: CoefficientTable, params: dict
) -> tuple[GlobalFactors, CoefficientTable]:
    """Copies with U/V/P/coeffs replaced from ``params`` when present
    (values may be autodiff variables)."""
    factors = replace(
        factors,
        U=params.get("U", factors.U),
        V=params.get("V", factors.V),
        P=params.get("P", factors.P),
    )
    table = replace(table, coeffs=params.get("coeffs", table.coeffs))
    return factors, table
