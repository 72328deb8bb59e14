import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sra.alignment import (
    AlignmentError,
    Span,
    align_spans,
    align_tokenized,
    boundary_offsets,
    lcs_oracle,
    span_char_range,
    validate_alignment,
)
from sra.tokenization import TokenizedText


def tokenized(offsets):
    offsets = np.asarray(offsets, dtype=np.int64)
    special = offsets == 0
    return TokenizedText(np.arange(len(offsets)), offsets, special)


def pairs_of(al):
    return [((t.start, t.end), (s.start, s.end)) for t, s in al.pairs]


def test_hand_traced_example():
    al = align_spans([0, 3, 7, 12], [0, 2, 7, 9, 12], 1, 1)
    assert pairs_of(al) == [((1, 2), (1, 2)), ((3, 3), (3, 4))]
    rep = validate_alignment(al, tokenized([0, 3, 7, 12]), tokenized([0, 2, 7, 9, 12]))
    assert rep.teacher_coverage == 1.0 and rep.student_coverage == 1.0
    assert rep.n_spans == 2


def test_identical_streams_give_singletons():
    al = align_spans([0, 2, 4, 6], [0, 2, 4, 6], 1, 1)
    assert pairs_of(al) == [((k, k), (k, k)) for k in (1, 2, 3)]
    rep = validate_alignment(al, tokenized([0, 2, 4, 6]), tokenized([0, 2, 4, 6]))
    assert rep.max_span_len == 1
    assert pairs_of(align_spans([0, 5], [0, 5], 1, 1)) == [((1, 1), (1, 1))]


def test_lcs_examples():
    assert lcs_oracle([3, 7, 12], [2, 7, 9, 12]) == [7, 12]
    assert lcs_oracle([1, 4, 9], [1, 4, 9]) == [1, 4, 9]
    assert lcs_oracle([1, 3], [2, 4]) == []


def test_disjoint_offsets_have_no_spans():
    al = align_spans([0, 1, 3], [0, 2, 4], 1, 1)
    assert len(al) == 0
    rep = validate_alignment(al, tokenized([0, 1, 3]), tokenized([0, 2, 4]))
    assert rep.teacher_coverage == 0.0 and rep.student_coverage == 0.0


def test_rejects_non_increasing_offsets():
    with pytest.raises(AlignmentError):
        align_spans([0, 3, 3], [0, 3], 1, 1)
    with pytest.raises(AlignmentError):
        align_spans([0, -1], [0, 3], 1, 1)


def test_bad_span():
    with pytest.raises(ValueError):
        Span(3, 2)


def test_validate_catches_tampering():
    tt, ts = tokenized([0, 3, 7, 12]), tokenized([0, 2, 7, 9, 12])
    al = align_spans(tt.end_offsets, ts.end_offsets, 1, 1)
    broken = type(al)([al.pairs[0]])
    with pytest.raises(AlignmentError):
        validate_alignment(broken, tt, ts)
    shifted = type(al)([(Span(1, 2), Span(1, 3)), al.pairs[1]])
    with pytest.raises(AlignmentError):
        validate_alignment(shifted, tt, ts)


def test_char_range():
    tt = tokenized([0, 3, 7, 12])
    assert span_char_range(Span(1, 2), tt) == (0, 7)
    assert span_char_range(Span(3, 3), tt) == (7, 12)


def random_offsets(rng, total, n):
    cuts = np.sort(rng.choice(np.arange(1, total), size=n - 1, replace=False)) if n > 1 else np.array([], int)
    return np.concatenate([cuts, [total]]).astype(np.int64)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_walk_matches_oracle_and_char_ranges(seed):
    rng = np.random.default_rng(seed)
    total = int(rng.integers(1, 100))
    a = random_offsets(rng, total, int(rng.integers(1, min(30, total) + 1)))
    b = random_offsets(rng, total, int(rng.integers(1, min(30, total) + 1)))
    ot, os_ = np.concatenate([[0], a]), np.concatenate([[0], b])
    al = align_spans(ot, os_, 1, 1)
    assert boundary_offsets(al, ot) == lcs_oracle(a, b)
    tt, ts = tokenized(ot), tokenized(os_)
    for t, s in al.pairs:
        assert span_char_range(t, tt) == span_char_range(s, ts)
    rep = validate_alignment(al, tt, ts)
    assert rep.teacher_coverage == 1.0 and rep.student_coverage == 1.0


def test_corpus_alignments_cover_everything():
    from sra.corpus import CorpusSpec, generate_corpus
    from sra.tokenization import encode_with_offsets, train_tokenizer_pair

    texts = [it.text for it in generate_corpus(CorpusSpec(n_sentences=200))]
    tok_t, tok_s = train_tokenizer_pair(texts, 64, 48)
    for text in texts:
        tt, ts = encode_with_offsets(tok_t, text), encode_with_offsets(tok_s, text)
        rep = validate_alignment(align_tokenized(tt, ts), tt, ts)
        assert rep.teacher_coverage == 1.0 and rep.student_coverage == 1.0
