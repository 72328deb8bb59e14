"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from sra import _pykernels
from sra.corpus import CorpusSpec, generate_corpus
from sra.tokenization import train_toy_tokenizer

try:
    from sra import _ckernels
except ImportError:
    _ckernels = None


def random_offsets(rng, n_chars, n_tokens):
    cuts = np.sort(rng.choice(np.arange(1, n_chars), size=n_tokens - 1, replace=False))
    return np.append(cuts, n_chars).astype(np.int64)


def cases(rng):
    items = generate_corpus(CorpusSpec(n_sentences=400))
    texts = [it.text for it in items]
    tok_a = train_toy_tokenizer(texts, 64, "A")
    tok_b = train_toy_tokenizer(texts, 48, "B")
    text = " ".join(texts[:40])
    chars_a = [3 + c for c in tok_a._char_ids(text)]
    rank, merged = tok_a._bpe_tables
    chars_b = tok_b._char_ids(text)
    nxt, tok = tok_b._trie
    ot = random_offsets(rng, 2000, 600)
    os_ = random_offsets(rng, 2000, 800)
    return {
        "bpe_encode": lambda k: k.bpe_encode(chars_a, rank, merged, len(tok_a.vocab)),
        "trie_encode": lambda k: k.trie_encode(chars_b, nxt, tok, len(tok_b.alphabet)),
        "walk_offsets": lambda k: k.walk_offsets(ot, os_, 0, 0),
        "lcs_offsets": lambda k: k.lcs_offsets(ot[:200], os_[:250]),
    }


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<14}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, fn in cases(rng).items():
        py = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{name:<14}{py:>12.3f}{'n/a':>12}{'':>10}")
            continue
        assert fn(_pykernels) == fn(_ckernels), name
        cy = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<14}{py:>12.3f}{cy:>12.3f}{py / cy:>9.1f}x")


if __name__ == "__main__":
    main()
