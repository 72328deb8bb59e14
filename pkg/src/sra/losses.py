"""Span-level distillation losses and the combined objective.

Teacher-side inputs may be numpy arrays or Tensors; they are always detached.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .pooling import DegenerateStats
from .tensor import Parameter, Tensor
from .tokenization import SharedVocabMap

NORM_EPS = 1e-12


class Projection:
    """Learnable student-to-teacher map, applied as ``C_s @ W``."""

    def __init__(self, d_student: int, d_teacher: int, seed: int = 0, std: float = 0.02, name: str = "projector.0"):
        rng = np.random.default_rng(seed)
        self.W = Parameter(rng.normal(0.0, std, size=(d_student, d_teacher)), name=name)

    @classmethod
    def from_array(cls, W, name: str = "projector.0") -> "Projection":
        proj = cls.__new__(cls)
        proj.W = Parameter(np.asarray(W, dtype=np.float64), name=name)
        return proj

    @classmethod
    def identity(cls, d: int) -> "Projection":
        return cls.from_array(np.eye(d))

    @property
    def shape(self):
        return self.W.shape

    def __call__(self, x):
        return T.as_tensor(x) @ self.W


@dataclass
class LossReport:
    ce: float
    hs_span: float
    geo: float
    kd_span: float
    overall: float
    n_spans: int
    weights_entropy: float

    def as_dict(self) -> dict:
        return asdict(self)


def _detached(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _unit_rows(X, stats: DegenerateStats | None):
    """Row-normalized X plus a validity mask; rows with norm < 1e-12 become 0."""
    X = T.as_tensor(X)
    sq = (X * X).sum(axis=-1, keepdims=True)
    dead = np.sqrt(sq.data) < NORM_EPS
    if dead.any():
        if stats is not None:
            stats.zero_norm_vectors += int(dead.sum())
        sq = sq + dead.astype(np.float64)
        X = X * (~dead).astype(np.float64)
    return X * T.sqrt(sq) ** -1.0, ~dead[..., 0]


def cosine_losses(U, V, stats: DegenerateStats | None = None) -> Tensor:
    """Row-wise 1 - cos(u, v); degenerate rows score exactly 1."""
    U, V = T.as_tensor(U), T.as_tensor(V)
    if U.shape != V.shape:
        raise T.ShapeError(f"cosine_loss: shapes {U.shape} and {V.shape} differ")
    u, ok_u = _unit_rows(U, stats)
    v, ok_v = _unit_rows(V, stats)
    cos = (u * v).sum(axis=-1) * (ok_u & ok_v).astype(np.float64)
    return 1.0 - cos


def cosine_loss(u, v, stats: DegenerateStats | None = None) -> Tensor:
    return cosine_losses(u, v, stats)


def cosine_gram(C, stats: DegenerateStats | None = None) -> Tensor:
    u, _ = _unit_rows(C, stats)
    return u @ T.transpose(u)


def pair_weights(span_weights) -> np.ndarray:
    """Upper-triangular w_i w_j normalized to sum to one."""
    w = np.asarray(span_weights, dtype=np.float64)
    n = len(w)
    tri = np.triu(np.ones((n, n)), k=1)
    P = np.outer(w, w) * tri
    total = P.sum()
    if total <= 0:
        return tri / tri.sum() if tri.sum() else tri
    return P / total


def geo_loss(coms_s, coms_t, span_weights, stats: DegenerateStats | None = None) -> Tensor:
    """Weighted squared gap between within-student and within-teacher span cosine similarities."""
    coms_s = T.as_tensor(coms_s)
    n = coms_s.shape[0]
    if np.asarray(_detached(coms_t)).shape[0] != n or len(span_weights) != n:
        raise ValueError("span count mismatch between student, teacher and weights")
    if n < 2:
        return Tensor(0.0)
    g_t = cosine_gram(Tensor(_detached(coms_t)), stats).data
    diff = cosine_gram(coms_s, stats) - g_t
    return (diff * diff * pair_weights(span_weights)).sum()


class HSLoss(NamedTuple):
    total: Tensor
    cos: Tensor
    geo: Tensor


def hs_span_loss(coms_s, coms_t, W: Projection, span_weights, lam: float,
                 stats: DegenerateStats | None = None, use_cos: bool = True, use_geo: bool = True) -> HSLoss:
    coms_s = T.as_tensor(coms_s)
    ct = _detached(coms_t)
    w = np.asarray(span_weights, dtype=np.float64)
    if coms_s.shape[0] != ct.shape[0] or len(w) != ct.shape[0]:
        raise ValueError(f"span count mismatch: student {coms_s.shape[0]}, teacher {ct.shape[0]}, weights {len(w)}")
    zero = Tensor(0.0)
    cos = (cosine_losses(W(coms_s), ct, stats) * w).sum() if use_cos else zero
    geo = geo_loss(coms_s, ct, w, stats) if use_geo else zero
    return HSLoss(cos + lam * geo, cos, geo)


def project_shared(logits, shared: SharedVocabMap, side: str) -> Tensor:
    if side not in ("teacher", "student"):
        raise ValueError(f"side must be 'teacher' or 'student', got {side!r}")
    if len(shared) == 0:
        raise ValueError("empty shared vocabulary")
    idx = shared.teacher_index if side == "teacher" else shared.student_index
    logits = T.as_tensor(logits)
    if idx.max() >= logits.shape[-1] or idx.min() < 0:
        raise IndexError(f"shared index {int(idx.max())} out of range for vocab of size {logits.shape[-1]}")
    return T.take(logits, idx, axis=-1)


def _np_log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def kd_span_loss(span_logits_t, span_logits_s, tau: float, tau_squared: bool = False) -> Tensor:
    """Sum over spans of KL(teacher || student) between tempered softmaxes."""
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    zt = _detached(span_logits_t)
    zs = T.as_tensor(span_logits_s)
    if zt.shape != zs.shape:
        raise T.ShapeError(f"kd_span_loss: teacher {zt.shape} vs student {zs.shape}")
    if zt.shape[0] == 0:
        return Tensor(0.0)
    log_pt = _np_log_softmax(zt / tau)
    pt = np.exp(log_pt)
    log_ps = T.log_softmax(zs * (1.0 / tau))
    kl = (float((pt * log_pt).sum()) - (log_ps * pt).sum())
    return kl * (tau * tau) if tau_squared else kl


def ce_loss(student_logits, target_ids, loss_mask) -> Tensor:
    """Mean next-token NLL over positions where ``loss_mask`` is set."""
    logits = T.as_tensor(student_logits)
    targets = np.asarray(target_ids, dtype=np.int64)
    mask = np.asarray(loss_mask, dtype=np.float64)
    if targets.shape != logits.shape[:-1] or mask.shape != targets.shape:
        raise T.ShapeError(f"ce_loss: logits {logits.shape}, targets {targets.shape}, mask {mask.shape}")
    count = mask.sum()
    if count <= 0:
        raise ValueError("ce_loss: empty loss mask")
    onehot = np.zeros(logits.shape)
    np.put_along_axis(onehot, targets[..., None], 1.0, axis=-1)
    nll = -(T.log_softmax(logits) * onehot).sum(axis=-1)
    return (nll * mask).sum() * (1.0 / count)


def overall_loss(ce, hs_span, kd_span, alpha: float):
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * ce + (1.0 - alpha) * (hs_span + kd_span)


def weights_entropy(span_weights) -> float:
    w = np.asarray(span_weights, dtype=np.float64)
    w = w[w > 0]
    return float(-(w * np.log(w)).sum())
