"""Span-level cross-tokenizer knowledge distillation on toy transformers."""

from ._kernels import BACKEND
from .alignment import Span, SpanAlignment, align_spans, lcs_oracle
from .config import RunConfig, load_config
from .model import ModelConfig, forward, init_model
from .tensor import Parameter, Tensor, backward, check_gradients
from .tokenization import ToyTokenizer, encode_with_offsets, train_toy_tokenizer

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ModelConfig",
    "Parameter",
    "RunConfig",
    "Span",
    "SpanAlignment",
    "Tensor",
    "ToyTokenizer",
    "align_spans",
    "backward",
    "check_gradients",
    "encode_with_offsets",
    "forward",
    "init_model",
    "lcs_oracle",
    "load_config",
    "train_toy_tokenizer",
]
