"""Attention-derived token masses, center-of-mass span pooling, and span weights."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .alignment import Span
from .tensor import Tensor

log = logging.getLogger(__name__)

NORM_MODES = ("com", "raw")


@dataclass
class DegenerateStats:
    """Counts of degenerate cases that were patched instead of aborting a batch."""

    zero_mass_spans: int = 0
    zero_norm_vectors: int = 0
    uniform_span_weights: int = 0

    def merge(self, other: "DegenerateStats") -> None:
        self.zero_mass_spans += other.zero_mass_spans
        self.zero_norm_vectors += other.zero_norm_vectors
        self.uniform_span_weights += other.uniform_span_weights


@dataclass
class TokenWeights:
    w: Tensor  # (T,)
    query_position: int

    @property
    def values(self) -> np.ndarray:
        return self.w.data


@dataclass
class SpanBundle:
    coms: Tensor  # (N, d)
    span_weights: np.ndarray
    spans: list[Span]
    source: str

    def __post_init__(self):
        if not (len(self.spans) == len(self.span_weights) == self.coms.shape[0]):
            raise ValueError("coms, span_weights and spans must have equal length")


def token_weights(attention, special_mask) -> TokenWeights:
    """Normalized attention the last content token pays each position, summed over heads."""
    att = T.as_tensor(attention)
    special = np.asarray(special_mask, dtype=bool)
    if att.ndim != 3 or att.shape[1] != att.shape[2] or att.shape[2] != special.shape[0]:
        raise T.ShapeError(f"attention must be (heads, T, T) matching mask length {special.shape[0]}, got {att.shape}")
    content = np.flatnonzero(~special)
    if content.size == 0:
        raise ValueError("sequence has no non-special tokens")
    q = int(content[-1])
    raw = T.take(att, q, axis=1).sum(axis=0) * (~special).astype(np.float64)
    return TokenWeights(raw * raw.sum() ** -1.0, q)


def uniform_token_weights(special_mask) -> TokenWeights:
    special = np.asarray(special_mask, dtype=bool)
    content = np.flatnonzero(~special)
    if content.size == 0:
        raise ValueError("sequence has no non-special tokens")
    w = (~special).astype(np.float64) / content.size
    return TokenWeights(Tensor(w), int(content[-1]))


def span_matrix(spans, length: int) -> np.ndarray:
    S = np.zeros((len(spans), length))
    for k, sp in enumerate(spans):
        if sp.end >= length:
            raise ValueError(f"span {sp} exceeds sequence length {length}")
        S[k, sp.start : sp.end + 1] = 1.0
    return S


def pool_spans(hidden, weights: TokenWeights | None, spans, norm: str = "com",
               stats: DegenerateStats | None = None) -> Tensor:
    """Span representations (N, d) from hidden states (T, d).

    ``weights=None`` is plain mean pooling.  ``norm="com"`` divides each span by
    its own mass; ``norm="raw"`` keeps the bare weighted sum.
    """
    if norm not in NORM_MODES:
        raise ValueError(f"norm must be one of {NORM_MODES}, got {norm!r}")
    hidden = T.as_tensor(hidden)
    S = span_matrix(spans, hidden.shape[0])
    if weights is None:
        return Tensor(S / S.sum(axis=1, keepdims=True)) @ hidden
    P = Tensor(S) * weights.w
    if norm == "raw":
        return P @ hidden
    mass = P.sum(axis=1, keepdims=True)
    dead = mass.data[:, 0] <= 0.0
    if dead.any():
        if stats is not None:
            stats.zero_mass_spans += int(dead.sum())
        log.warning("%d span(s) with zero mass fall back to mean pooling", int(dead.sum()))
        fallback = np.where(dead[:, None], S / S.sum(axis=1, keepdims=True), 0.0)
        P = P * (mass + dead[:, None].astype(np.float64)) ** -1.0 + fallback
    else:
        P = P * mass ** -1.0
    return P @ hidden


def span_com(hidden, weights: TokenWeights, span: Span, norm: str = "com",
             stats: DegenerateStats | None = None) -> Tensor:
    return T.take(pool_spans(hidden, weights, [span], norm, stats), 0, axis=0)


def span_masses(token_w, spans) -> np.ndarray:
    w = np.asarray(token_w.values if isinstance(token_w, TokenWeights) else token_w, dtype=np.float64)
    return np.array([w[sp.start : sp.end + 1].sum() for sp in spans])


def span_weights(teacher_token_weights, teacher_spans, p: float = 1.0,
                 stats: DegenerateStats | None = None) -> np.ndarray:
    """Teacher span masses raised to ``p`` and normalized; p=0 is uniform."""
    if p < 0:
        raise ValueError(f"p must be non-negative, got {p}")
    n = len(teacher_spans)
    if n == 0:
        return np.zeros(0)
    masses = span_masses(teacher_token_weights, teacher_spans)
    raw = np.ones(n) if p == 0 else masses ** p
    total = raw.sum()
    if total <= 0:
        if stats is not None:
            stats.uniform_span_weights += 1
        log.warning("all %d span masses are zero; using uniform span weights", n)
        return np.full(n, 1.0 / n)
    return raw / total


def attention_index_for_layer(layer: int) -> int:
    """Block whose attention weighs hidden[layer]; the embedding layer borrows block 0's."""
    return max(layer - 1, 0)
