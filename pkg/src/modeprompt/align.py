"""Modality-alignment modules: batch context enhancement and the gated
query transform.

``context_enhance`` enriches each pooled fusion feature with an attention-
weighted mixture of every textual query feature in the batch (the item's own
query included).  ``gated_query_transform`` blends a fusion feature with a
learned transform of the query feature through a per-coordinate gate; with
its parameters at their zero init the transformed query is exactly zero, so
the module reduces to scaling the fusion feature by 1/E (softmax gate) or
1/2 (sigmoid gate).

Both functions accept plain arrays or autodiff variables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

GATE_MODES = ("softmax", "sigmoid")


@dataclass
class GateParams:
    """Elementwise gate transform parameters, zero at construction."""

    gamma: np.ndarray  # (E,)
    beta: np.ndarray  # (E,)

    @classmethod
    def zeros(cls, width: int) -> "GateParams":
        return cls(gamma=np.zeros(width), beta=np.zeros(width))

    @classmethod
    def ones(cls, width: int) -> "GateParams":
        return cls(gamma=np.ones(width), beta=np.ones(width))


def context_enhance(fusion, queries):
    """Enhance pooled fusion features with batch query context.

    ``fusion`` and ``queries`` are (B, E) with row i holding item i's fusion
    feature f_i and textual query feature t_i.  Returns ``(alpha, enhanced)``
    where ``alpha[i, j] = exp(f_i . t_j) / sum_b exp(f_i . t_b)`` (computed
    with row-max stabilization) and ``enhanced[i] = f_i + sum_j alpha[i, j]
    t_j``.  Rows of alpha sum to 1.
    """
    f_shape, t_shape = ad.value(fusion).shape, ad.value(queries).shape
    if f_shape != t_shape:
        raise ValueError(
            f"fusion and query features must share shape, got {f_shape} vs {t_shape}"
        )
    scores = fusion @ ad.transpose(queries)
    alpha = ad.softmax_rows(scores)
    enhanced = fusion + alpha @ queries
    return alpha, enhanced


def gated_query_transform(fusion, query, params: GateParams, mode: str = "softmax"):
    """Blend a fusion feature with a gated transform of the query feature.

    The query is remapped as ``t' = tanh(gamma * t) + beta`` (zero at the
    zero init), the gate logits are the elementwise product ``z = t' * f``,
    and the gate is either a softmax over the E coordinates of z (default)
    or an elementwise sigmoid.  Returns ``g * f + (1 - g) * t'``.

    Accepts 1-D vectors or (1, E) rows; the output matches the input shape.
    """
    if mode not in GATE_MODES:
        raise ValueError(f"gate mode must be one of {GATE_MODES}, got {mode!r}")
    f_shape, t_shape = ad.value(fusion).shape, ad.value(query).shape
    if f_shape != t_shape:
        raise ValueError(f"feature shapes differ: {f_shape} vs {t_shape}")
    flat_input = len(f_shape) == 1
    if flat_input:
        fusion = ad.value(fusion).reshape(1, -1)
        query = ad.value(query).reshape(1, -1)

    t_prime = ad.tanh(params.gamma * query) + params.beta
    logits = t_prime * fusion
    if mode == "softmax":
        gate = ad.softmax_rows(logits)
    else:
        gate = ad.sigmoid(logits)
    out = gate * fusion + (1.0 - gate) * t_prime
    if flat_input:
        return ad.value(out).reshape(-1) if not isinstance(out, ad.Var) else out
    return out
