"""The compiled kernels and the pure-Python fallback must agree exactly."""

import importlib
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sra import _kernels, _pykernels
from sra.corpus import CorpusSpec, generate_corpus
from sra.tokenization import train_toy_tokenizer

ck = pytest.importorskip("sra._ckernels")


@pytest.fixture(scope="module")
def toks():
    texts = [it.text for it in generate_corpus(CorpusSpec(n_sentences=200))]
    return train_toy_tokenizer(texts, 64, "A"), train_toy_tokenizer(texts, 48, "B")


def test_compiled_backend_selected():
    assert _kernels.BACKEND == "cython"


def test_env_forces_python_backend():
    env = dict(os.environ, SRA_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import sra; print(sra.BACKEND)"], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_reload_is_stable():
    assert importlib.reload(_kernels).BACKEND == "cython"


@settings(max_examples=150, deadline=None)
@given(st.data())
def test_encoders_agree(toks, data):
    tok_a, tok_b = toks
    text = data.draw(st.text(alphabet=tok_a.alphabet, min_size=1, max_size=60))
    chars_a = [3 + c for c in tok_a._char_ids(text)]
    rank, merged = tok_a._bpe_tables
    n = len(tok_a.vocab)
    assert list(ck.bpe_encode(chars_a, rank, merged, n)) == list(_pykernels.bpe_encode(chars_a, rank, merged, n))
    chars_b = tok_b._char_ids(text)
    nxt, tk = tok_b._trie
    m = len(tok_b.alphabet)
    assert list(ck.trie_encode(chars_b, nxt, tk, m)) == list(_pykernels.trie_encode(chars_b, nxt, tk, m))


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(1, 60), max_size=30, unique=True), st.lists(st.integers(1, 60), max_size=30, unique=True))
def test_offset_kernels_agree(a, b):
    a, b = np.array(sorted(a), dtype=np.int64), np.array(sorted(b), dtype=np.int64)
    assert list(ck.lcs_offsets(a, b)) == list(_pykernels.lcs_offsets(a, b))
    ot, os_ = np.concatenate([[0], a]), np.concatenate([[0], b])
    assert [tuple(x) for x in ck.walk_offsets(ot, os_, 1, 1)] == [tuple(x) for x in _pykernels.walk_offsets(ot, os_, 1, 1)]


def test_trie_no_match_raises_in_both():
    nxt = np.array([-1, -1], dtype=np.int64)
    tok = np.array([-1], dtype=np.int64)
    for k in (ck, _pykernels):
        with pytest.raises(ValueError):
            k.trie_encode([0], nxt, tok, 2)
