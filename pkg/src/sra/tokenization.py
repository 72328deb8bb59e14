"""Two toy subword tokenizers with character end-offsets, and the shared vocabulary.

Scheme ``A`` learns pair merges (BPE); scheme ``B`` picks a lexicon of frequent
substrings and segments by greedy longest match.  Both work on raw text with
no pre-tokenization, so tokens may span spaces.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _kernels

PAD, BOS, EOS = 0, 1, 2
SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>")
SCHEMES = ("A", "B")
FORMAT_HEADER = "sra-tok v1"

_LEXICON_MAX_LEN = 6


@dataclass(frozen=True)
class TokenizedText:
    token_ids: np.ndarray
    end_offsets: np.ndarray
    special_mask: np.ndarray

    def __len__(self):
        return len(self.token_ids)

    @property
    def first_content(self) -> int:
        """Index of the first non-special token (len if none)."""
        idx = np.flatnonzero(~self.special_mask)
        return int(idx[0]) if idx.size else len(self)


@dataclass(frozen=True)
class SharedVocabMap:
    shared_tokens: tuple[str, ...]
    teacher_index: np.ndarray
    student_index: np.ndarray

    def __len__(self):
        return len(self.shared_tokens)


def _priority(seed: int, *parts: str) -> float:
    # str seeding hashes with sha512, so this is stable across processes
    return random.Random(f"{seed}\x1f" + "\x1f".join(parts)).random()


@dataclass
class ToyTokenizer:
    scheme: str
    vocab: dict[str, int]
    merges: list[tuple[str, str]] = field(default_factory=list)
    lexicon: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        ids = sorted(self.vocab.values())
        if ids != list(range(len(ids))):
            raise ValueError("vocabulary ids must be contiguous from 0")
        if any(self.vocab.get(t) != i for i, t in enumerate(SPECIAL_TOKENS)):
            raise ValueError("special tokens must occupy ids 0..2")

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset(range(len(SPECIAL_TOKENS)))

    @cached_property
    def id_to_token(self) -> list[str]:
        out = [""] * len(self.vocab)
        for tok, i in self.vocab.items():
            out[i] = tok
        return out

    @cached_property
    def alphabet(self) -> str:
        return "".join(sorted(t for t in self.vocab if len(t) == 1 and t not in SPECIAL_TOKENS))

    @cached_property
    def _char_index(self) -> dict[str, int]:
        return {c: k for k, c in enumerate(self.alphabet)}

    @cached_property
    def _bpe_tables(self):
        n = len(self.vocab)
        rank = np.full(n * n, -1, dtype=np.int64)
        merged = np.full(n * n, -1, dtype=np.int64)
        for r, (a, b) in enumerate(self.merges):
            key = self.vocab[a] * n + self.vocab[b]
            if rank[key] < 0:
                rank[key] = r
                merged[key] = self.vocab[a + b]
        return rank, merged

    @cached_property
    def _trie(self):
        n_alpha = len(self.alphabet)
        nxt = [[-1] * n_alpha]
        tok = [-1]
        entries = list(self.lexicon) + list(self.alphabet)
        for entry in entries:
            node = 0
            for ch in entry:
                c = self._char_index[ch]
                if nxt[node][c] < 0:
                    nxt[node][c] = len(nxt)
                    nxt.append([-1] * n_alpha)
                    tok.append(-1)
                node = nxt[node][c]
            tok[node] = self.vocab[entry]
        return np.array(nxt, dtype=np.int64).reshape(-1), np.array(tok, dtype=np.int64)

    def _char_ids(self, text: str) -> list[int]:
        index = self._char_index
        out = []
        for pos, ch in enumerate(text):
            k = index.get(ch)
            if k is None:
                raise ValueError(f"character {ch!r} at position {pos} is outside the tokenizer alphabet")
            out.append(k)
        return out

    def tokenize(self, text: str) -> list[int]:
        chars = self._char_ids(text)
        if not chars:
            return []
        if self.scheme == "A":
            base = [len(SPECIAL_TOKENS) + c for c in chars]
            rank, merged = self._bpe_tables
            return _kernels.bpe_encode(base, rank, merged, len(self.vocab))
        nxt, tok = self._trie
        return _kernels.trie_encode(chars, nxt, tok, len(self.alphabet))

    def decode(self, ids) -> str:
        return "".join(self.id_to_token[i] for i in ids if i not in self.special_ids)

    def save(self, path) -> None:
        Path(path).write_text(dumps_tokenizer(self), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ToyTokenizer":
        return loads_tokenizer(Path(path).read_text(encoding="utf-8"))


def _alphabet_of(corpus) -> list[str]:
    chars = sorted(set("".join(corpus)))
    bad = [c for c in chars if c in "\t\n\r\\"]
    if bad:
        raise ValueError(f"corpus contains unsupported characters {bad!r}")
    return chars


def _base_vocab(alphabet) -> dict[str, int]:
    vocab = {t: i for i, t in enumerate(SPECIAL_TOKENS)}
    for c in alphabet:
        vocab[c] = len(vocab)
    return vocab


def _train_bpe(corpus, vocab, vocab_size, seed):
    seqs = [list(text) for text in corpus if text]
    merges = []
    while len(vocab) < vocab_size:
        counts = Counter()
        for s in seqs:
            counts.update(zip(s, s[1:]))
        if not counts:
            break
        (a, b), _ = max(counts.items(), key=lambda kv: (kv[1], _priority(seed, *kv[0])))
        merges.append((a, b))
        new = a + b
        if new not in vocab:
            vocab[new] = len(vocab)
        for idx, s in enumerate(seqs):
            if len(s) < 2:
                continue
            out = []
            k = 0
            while k < len(s):
                if k + 1 < len(s) and s[k] == a and s[k + 1] == b:
                    out.append(new)
                    k += 2
                else:
                    out.append(s[k])
                    k += 1
            seqs[idx] = out
    return merges


def _train_lexicon(corpus, vocab, vocab_size, seed):
    counts = Counter()
    for text in corpus:
        for n in range(2, _LEXICON_MAX_LEN + 1):
            counts.update(text[k : k + n] for k in range(len(text) - n + 1))
    # score = characters saved per occurrence times frequency
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1] * (len(kv[0]) - 1), _priority(seed, kv[0])))
    lexicon = []
    for sub, _ in ranked:
        if len(vocab) >= vocab_size:
            break
        vocab[sub] = len(vocab)
        lexicon.append(sub)
    return lexicon


def train_toy_tokenizer(corpus, vocab_size: int, scheme: str, seed: int = 0) -> ToyTokenizer:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    corpus = list(corpus)
    if not corpus or not any(corpus):
        raise ValueError("corpus is empty")
    alphabet = _alphabet_of(corpus)
    minimum = len(alphabet) + len(SPECIAL_TOKENS)
    if vocab_size < minimum:
        raise ValueError(f"vocab_size {vocab_size} below alphabet + specials ({minimum})")
    vocab = _base_vocab(alphabet)
    if scheme == "A":
        return ToyTokenizer("A", vocab, merges=_train_bpe(corpus, vocab, vocab_size, seed))
    return ToyTokenizer("B", vocab, lexicon=_train_lexicon(corpus, vocab, vocab_size, seed))


def encode_with_offsets(tok: ToyTokenizer, text: str, add_specials: bool = True, add_eos: bool = False) -> TokenizedText:
    """Token ids with 1-based character end offsets; specials get offset 0."""
    ids = tok.tokenize(text)
    strings = tok.id_to_token
    offsets = []
    end = 0
    for i in ids:
        end += len(strings[i])
        offsets.append(end)
    special = [False] * len(ids)
    if add_specials:
        ids = [BOS] + ids
        offsets = [0] + offsets
        special = [True] + special
        if add_eos:
            ids.append(EOS)
            offsets.append(0)
            special.append(True)
    return TokenizedText(
        np.array(ids, dtype=np.int64),
        np.array(offsets, dtype=np.int64),
        np.array(special, dtype=bool),
    )


def segmentation(tok: ToyTokenizer, text: str) -> tuple[int, ...]:
    return tuple(encode_with_offsets(tok, text, add_specials=False).end_offsets.tolist())


def segmentation_disagreement(tok_a: ToyTokenizer, tok_b: ToyTokenizer, texts) -> float:
    texts = list(texts)
    if not texts:
        return 0.0
    differ = sum(segmentation(tok_a, t) != segmentation(tok_b, t) for t in texts)
    return differ / len(texts)


def train_tokenizer_pair(corpus, teacher_vocab: int, student_vocab: int, seed: int = 0,
                         teacher_scheme: str = "A", student_scheme: str = "B",
                         min_disagreement: float = 0.5, max_tries: int = 8):
    """Train teacher and student tokenizers, perturbing the seed until they disagree enough.

    With identical scheme and size the pair is trained once and returned as is
    (same-tokenizer mode).
    """
    corpus = list(corpus)
    if teacher_scheme == student_scheme and teacher_vocab == student_vocab:
        tok = train_toy_tokenizer(corpus, teacher_vocab, teacher_scheme, seed)
        return tok, tok
    for attempt in range(max_tries):
        s = seed + attempt
        tok_t = train_toy_tokenizer(corpus, teacher_vocab, teacher_scheme, s)
        tok_s = train_toy_tokenizer(corpus, student_vocab, student_scheme, s)
        if segmentation_disagreement(tok_t, tok_s, corpus) >= min_disagreement:
            return tok_t, tok_s
    raise RuntimeError(
        f"tokenizers agree on more than {1 - min_disagreement:.0%} of sentences after {max_tries} seeds"
    )


def shared_vocabulary(tok_t: ToyTokenizer, tok_s: ToyTokenizer) -> SharedVocabMap:
    specials = set(SPECIAL_TOKENS)
    shared = sorted((set(tok_t.vocab) & set(tok_s.vocab)) - specials)
    if not shared:
        raise ValueError(
            f"teacher ({len(tok_t.vocab)} tokens) and student ({len(tok_s.vocab)} tokens) "
            "vocabularies share no non-special token"
        )
    return SharedVocabMap(
        tuple(shared),
        np.array([tok_t.vocab[t] for t in shared], dtype=np.int64),
        np.array([tok_s.vocab[t] for t in shared], dtype=np.int64),
    )


def _esc(s: str) -> str:
    return s.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def _unesc(s: str) -> str:
    out = []
    k = 0
    while k < len(s):
        if s[k] == "\\" and k + 1 < len(s):
            out.append({"t": "\t", "n": "\n", "\\": "\\"}[s[k + 1]])
            k += 2
        else:
            out.append(s[k])
            k += 1
    return "".join(out)


def dumps_tokenizer(tok: ToyTokenizer) -> str:
    lines = [f"{FORMAT_HEADER} {tok.scheme}"]
    lines += [f"{_esc(t)}\t{i}" for t, i in tok.vocab.items()]
    if tok.scheme == "A":
        lines.append(f"== merges {len(tok.merges)}")
        lines += [f"{_esc(a)}\t{_esc(b)}" for a, b in tok.merges]
    else:
        lines.append(f"== lexicon {len(tok.lexicon)}")
        lines += [_esc(t) for t in tok.lexicon]
    return "\n".join(lines) + "\n"


def loads_tokenizer(text: str) -> ToyTokenizer:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or not lines[0].startswith(FORMAT_HEADER + " "):
        raise ValueError("not an sra-tok v1 file")
    scheme = lines[0][len(FORMAT_HEADER) + 1 :]
    vocab: dict[str, int] = {}
    k = 1
    while k < len(lines) and not (lines[k].startswith("== ") and "\t" not in lines[k]):
        tok_s, id_s = lines[k].rsplit("\t", 1)
        vocab[_unesc(tok_s)] = int(id_s)
        k += 1
    if k == len(lines):
        raise ValueError("missing merge/lexicon section")
    _, kind, count = lines[k].split(" ")
    body = lines[k + 1 :]
    if len(body) != int(count):
        raise ValueError(f"{kind} section declares {count} entries, found {len(body)}")
    if kind == "merges":
        merges = [tuple(_unesc(p) for p in line.split("\t")) for line in body]
        return ToyTokenizer(scheme, vocab, merges=merges)
    return ToyTokenizer(scheme, vocab, lexicon=[_unesc(line) for line in body])
