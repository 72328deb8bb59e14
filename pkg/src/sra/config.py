"""Run configuration: nested dataclasses loaded from a YAML key-value file."""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .corpus import CorpusSpec


@dataclass
class TokenizerSpec:
    scheme: str = "A"
    vocab_size: int = 64


@dataclass
class TokenizerPairSpec:
    teacher: TokenizerSpec = field(default_factory=lambda: TokenizerSpec("A", 64))
    student: TokenizerSpec = field(default_factory=lambda: TokenizerSpec("B", 48))
    seed: int = 0
    train_sentences: int = 400


@dataclass
class ArchSpec:
    n_layers: int = 2
    d_model: int = 32
    n_heads: int = 2
    d_ff: int = 64
    max_seq_len: int = 64
    seed: int = 0


@dataclass
class PretrainSpec:
    epochs: int = 6
    batch_size: int = 16
    lr: float = 3e-3
    grad_clip: float = 1.0


@dataclass
class DistillSpec:
    alpha: float = 0.5
    lam: float = 50.0
    p: float = 1.0
    tau: float = 2.0
    tau_squared: bool = False
    lr: float = 2e-3
    projector_lr: float = 5e-4
    schedule: str = "cosine"
    grad_clip: float = 1.0
    epochs: int = 6
    batch_size: int = 8
    n_train: int = 400
    transfer_layers: list[int] = field(default_factory=lambda: [0])
    norm: str = "com"
    wsp: bool = True
    wsl: bool = True
    use_cos: bool = True
    use_geo: bool = True
    use_kd: bool = True
    mask_prompt: bool = True
    select_by: str = "span_kl"


@dataclass
class RunConfig:
    corpus: CorpusSpec = field(default_factory=lambda: CorpusSpec(n_sentences=1600))
    n_valid: int = 100
    n_eval: int = 200
    tokenizers: TokenizerPairSpec = field(default_factory=TokenizerPairSpec)
    teacher: ArchSpec = field(default_factory=lambda: ArchSpec(4, 64, 4, 128, 64, 0))
    student: ArchSpec = field(default_factory=ArchSpec)
    pretrain: PretrainSpec = field(default_factory=PretrainSpec)
    distill: DistillSpec = field(default_factory=DistillSpec)
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **dotted) -> "RunConfig":
        """Copy with dotted-key overrides, e.g. ``replace(**{"distill.lam": 0.0})``."""
        data = self.to_dict()
        for key, value in dotted.items():
            node = data
            *path, last = key.split(".")
            for part in path:
                node = node[part]
            if last not in node:
                raise KeyError(f"unknown config key {key!r}")
            node[last] = copy.deepcopy(value)
        return config_from_dict(data)


def _build(cls, data: dict | None):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise TypeError(f"expected a mapping for {cls.__name__}, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise KeyError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    default = cls()
    kwargs = {}
    for name in known:
        if name not in data:
            continue
        value = data[name]
        sub = getattr(default, name)
        if dataclasses.is_dataclass(sub):
            # partial sections fall back to the parent's defaults
            merged = dataclasses.asdict(sub)
            merged.update(value or {})
            value = _build(type(sub), merged)
        kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: dict | None) -> RunConfig:
    return _build(RunConfig, data or {})


def load_config(path) -> RunConfig:
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    return config_from_dict(data)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
