"""Synthetic prompt/response corpus over a small alphabet.

Sentences are walks of a sparse Markov chain over a fixed lexicon of short
"words", so there is real structure for the teacher to learn and repeated
substrings for the tokenizers to merge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CorpusSpec:
    seed: int = 0
    n_sentences: int = 1000
    alphabet: str = "abcdefgh"
    n_words: int = 20
    min_word_len: int = 2
    max_word_len: int = 5
    min_words: int = 4
    max_words: int = 8
    prompt_words: int = 2
    successors: int = 3


@dataclass(frozen=True)
class CorpusItem:
    prompt: str
    response: str

    @property
    def text(self) -> str:
        return self.prompt + self.response


def _lexicon(spec: CorpusSpec, rng) -> list[str]:
    letters = list(spec.alphabet)
    words: list[str] = []
    seen = set()
    while len(words) < spec.n_words:
        n = int(rng.integers(spec.min_word_len, spec.max_word_len + 1))
        w = "".join(rng.choice(letters, size=n))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def generate_corpus(spec: CorpusSpec) -> list[CorpusItem]:
    if spec.n_sentences <= 0:
        return []
    if spec.prompt_words >= spec.min_words:
        raise ValueError("prompt_words must leave at least one response word")
    rng = np.random.default_rng(spec.seed)
    words = _lexicon(spec, rng)
    n = len(words)
    k = min(spec.successors, n)
    nxt = np.array([rng.choice(n, size=k, replace=False) for _ in range(n)])
    probs = rng.dirichlet(np.ones(k), size=n)
    start = rng.dirichlet(np.ones(n))
    items = []
    for _ in range(spec.n_sentences):
        length = int(rng.integers(spec.min_words, spec.max_words + 1))
        w = int(rng.choice(n, p=start))
        seq = [w]
        for _ in range(length - 1):
            w = int(nxt[w][rng.choice(k, p=probs[w])])
            seq.append(w)
        tokens = [words[i] for i in seq]
        prompt = " ".join(tokens[: spec.prompt_words]) + " "
        items.append(CorpusItem(prompt, " ".join(tokens[spec.prompt_words :])))
    return items


def split_corpus(items, n_valid: int, n_eval: int):
    """(train, valid, eval) taken from the end of the list."""
    if n_valid + n_eval >= len(items):
        raise ValueError("held-out splits leave no training data")
    cut = len(items) - n_valid - n_eval
    return items[:cut], items[cut : cut + n_valid], items[cut + n_valid :]
