"""Minimal pre-norm decoder-only transformer that exposes every hidden state and attention map."""

from __future__ import annotations

import math
import struct
from dataclasses import astuple, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import tensor as T
from .tensor import Parameter, ShapeError, Tensor

MAGIC = b"SRA1"
INIT_STD = 0.02


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int
    d_model: int
    n_heads: int
    d_ff: int
    vocab_size: int
    max_seq_len: int
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            if f.name != "seed" and getattr(self, f.name) <= 0:
                raise ValueError(f"{f.name} must be positive, got {getattr(self, f.name)}")
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


def parameter_count(cfg: ModelConfig) -> int:
    d, f, v = cfg.d_model, cfg.d_ff, cfg.vocab_size
    per_block = 2 * d + 3 * d * d + (d * d + d) + 2 * d + (d * f + f) + (f * d + d)
    return v * d + cfg.max_seq_len * d + cfg.n_layers * per_block + 2 * d + d * v + v


@dataclass
class ModelActivations:
    """Per-layer states for one batch.

    ``hidden[0]`` is the embedding output and ``hidden[-1]`` the post-norm
    input to the LM head; ``residual`` is the raw stream (``residual[L]`` is
    pre-norm).  ``attention[l]`` holds block l's probabilities, (..., H, T, T).
    """

    hidden: list[Tensor]
    attention: list[Tensor]
    logits: Tensor
    residual: list[Tensor] = field(default_factory=list)
    attn_out: list[Tensor] = field(default_factory=list)
    ffn_out: list[Tensor] = field(default_factory=list)


class Model:
    def __init__(self, config: ModelConfig, params: dict[str, Parameter]):
        self.config = config
        self.params = params

    def __getitem__(self, name: str) -> Parameter:
        return self.params[name]

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def freeze(self) -> "Model":
        for p in self.params.values():
            p.requires_grad = False
        return self

    def copy(self) -> "Model":
        return Model(self.config, {k: Parameter(p.data, name=k, requires_grad=p.requires_grad)
                                   for k, p in self.params.items()})

    def state(self) -> dict[str, np.ndarray]:
        return {k: p.data for k, p in self.params.items()}


def init_model(config: ModelConfig, std: float = INIT_STD) -> Model:
    rng = np.random.default_rng(config.seed)
    d, f, v = config.d_model, config.d_ff, config.vocab_size
    params: dict[str, Parameter] = {}

    def gauss(name, *shape):
        params[name] = Parameter(rng.normal(0.0, std, size=shape), name=name)

    def const(name, value, n):
        params[name] = Parameter(np.full(n, value), name=name)

    gauss("tok_emb", v, d)
    gauss("pos_emb", config.max_seq_len, d)
    for l in range(config.n_layers):
        p = f"blocks.{l}."
        const(p + "ln1.g", 1.0, d)
        const(p + "ln1.b", 0.0, d)
        gauss(p + "attn.w_qkv", d, 3 * d)
        gauss(p + "attn.w_o", d, d)
        const(p + "attn.b_o", 0.0, d)
        const(p + "ln2.g", 1.0, d)
        const(p + "ln2.b", 0.0, d)
        gauss(p + "ffn.w_in", d, f)
        const(p + "ffn.b_in", 0.0, f)
        gauss(p + "ffn.w_out", f, d)
        const(p + "ffn.b_out", 0.0, d)
    const("ln_f.g", 1.0, d)
    const("ln_f.b", 0.0, d)
    gauss("head.w", d, v)
    const("head.b", 0.0, v)
    return Model(config, params)


def _norm(model, prefix, x):
    return T.layernorm(x) * model[prefix + ".g"] + model[prefix + ".b"]


def _silu(x):
    return x * (1.0 + T.exp(-x)) ** -1.0


def _attention(model, l, x, lengths_mask):
    cfg = model.config
    B, L = x.shape[0], x.shape[1]
    H, dh = cfg.n_heads, cfg.head_dim
    p = f"blocks.{l}.attn."
    # no q/k/v bias: a key bias cancels inside the softmax
    qkv = x @ model[p + "w_qkv"]
    qkv = T.transpose(T.reshape(qkv, (B, L, 3, H, dh)), (2, 0, 3, 1, 4))
    q, k, v = (T.take(qkv, i, axis=0) for i in range(3))
    scores = (q @ T.transpose(k)) * (1.0 / math.sqrt(dh))
    att = T.softmax(T.masked_fill(scores, lengths_mask))
    mixed = T.reshape(T.transpose(att @ v, (0, 2, 1, 3)), (B, L, cfg.d_model))
    return mixed @ model[p + "w_o"] + model[p + "b_o"], att


def forward(model: Model, token_ids, capture: bool = True) -> ModelActivations:
    """Run the decoder on ids of shape (T,) or (B, T).

    Batched sequences are right-padded; causal masking keeps real positions
    independent of trailing padding.
    """
    cfg = model.config
    ids = np.asarray(token_ids, dtype=np.int64)
    squeeze = ids.ndim == 1
    if squeeze:
        ids = ids[None, :]
    if ids.ndim != 2:
        raise ShapeError(f"token_ids must be 1-D or 2-D, got shape {ids.shape}")
    L = ids.shape[1]
    if L > cfg.max_seq_len:
        raise ValueError(f"sequence length {L} exceeds max_seq_len {cfg.max_seq_len}")
    if L == 0:
        raise ValueError("empty sequence")
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise ValueError(f"token ids outside [0, {cfg.vocab_size})")

    causal = np.triu(np.ones((L, L), dtype=bool), k=1)
    x = T.embedding(model["tok_emb"], ids) + T.take(model["pos_emb"], slice(0, L), axis=0)
    residual, attention, attn_out, ffn_out = [x], [], [], []
    for l in range(cfg.n_layers):
        p = f"blocks.{l}."
        a, att = _attention(model, l, _norm(model, p + "ln1", x), causal)
        x = x + a
        h = _norm(model, p + "ln2", x)
        m = _silu(h @ model[p + "ffn.w_in"] + model[p + "ffn.b_in"]) @ model[p + "ffn.w_out"] + model[p + "ffn.b_out"]
        x = x + m
        attention.append(att)
        if capture:
            attn_out.append(a)
            ffn_out.append(m)
            residual.append(x)
    final = _norm(model, "ln_f", x)
    logits = lm_head(model, final)
    if capture:
        hidden = residual[:-1] + [final]
    else:
        hidden, attention, residual = [final], attention[-1:], []
    acts = ModelActivations(hidden, attention, logits, residual, attn_out, ffn_out)
    if squeeze:
        acts = _unbatch(acts)
    return acts


def _unbatch(acts: ModelActivations) -> ModelActivations:
    first = lambda xs: [T.take(t, 0, axis=0) for t in xs]
    return ModelActivations(first(acts.hidden), first(acts.attention), T.take(acts.logits, 0, axis=0),
                            first(acts.residual), first(acts.attn_out), first(acts.ffn_out))


def lm_head(model: Model, hidden) -> Tensor:
    hidden = T.as_tensor(hidden)
    if hidden.ndim == 0 or hidden.shape[-1] != model.config.d_model:
        raise ShapeError(f"lm_head expects trailing dim {model.config.d_model}, got shape {hidden.shape}")
    return hidden @ model["head.w"] + model["head.b"]


# checkpoint IO: little-endian throughout

def save_checkpoint(path, config: ModelConfig, params: dict[str, np.ndarray]) -> None:
    chunks = [MAGIC, struct.pack("<7q", *astuple(config))]
    for name, arr in params.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)) + raw)
        chunks.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}q", *arr.shape))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic {buf[:4]!r}")
    pos = 4
    config = ModelConfig(*struct.unpack_from("<7q", buf, pos))
    pos += 56
    params = {}
    while pos < len(buf):
        (n,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        name = buf[pos : pos + n].decode("utf-8")
        pos += n
        (rank,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        shape = struct.unpack_from(f"<{rank}q", buf, pos)
        pos += 8 * rank
        count = int(np.prod(shape)) if rank else 1
        params[name] = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * count
    return config, params


def save_model(path, model: Model, extra: dict[str, np.ndarray] | None = None) -> None:
    params = dict(model.state())
    params.update(extra or {})
    save_checkpoint(path, model.config, params)


def load_model(path) -> tuple[Model, dict[str, np.ndarray]]:
    """Model plus any extra arrays stored alongside it (e.g. projector weights)."""
    config, arrays = load_checkpoint(path)
    template = init_model(config)
    missing = [k for k in template.params if k not in arrays]
    if missing:
        raise ValueError(f"{path}: checkpoint lacks parameters {missing[:3]}")
    params = {k: Parameter(arrays[k], name=k) for k in template.params}
    extra = {k: v for k, v in arrays.items() if k not in template.params}
    return Model(config, params), extra
