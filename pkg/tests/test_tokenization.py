import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sra.corpus import CorpusSpec, generate_corpus
from sra.tokenization import (
    BOS,
    ToyTokenizer,
    dumps_tokenizer,
    encode_with_offsets,
    loads_tokenizer,
    segmentation_disagreement,
    shared_vocabulary,
    train_tokenizer_pair,
    train_toy_tokenizer,
)


@pytest.fixture(scope="module")
def texts():
    return [it.text for it in generate_corpus(CorpusSpec(n_sentences=300))]


@pytest.fixture(scope="module")
def pair(texts):
    return train_tokenizer_pair(texts, 64, 48)


def test_bpe_learns_ab_first():
    tok = train_toy_tokenizer(["aab", "ab"], 8, "A")
    assert tok.merges[0] == ("a", "b")
    assert "ab" in tok.vocab
    assert tok.tokenize("ab") == [tok.vocab["ab"]]


def test_rejects_tiny_vocab_and_bad_scheme():
    with pytest.raises(ValueError):
        train_toy_tokenizer(["aab", "ab"], 1, "A")
    with pytest.raises(ValueError):
        train_toy_tokenizer(["aab"], 8, "C")
    with pytest.raises(ValueError):
        train_toy_tokenizer([], 8, "A")


@pytest.mark.parametrize("scheme", ["A", "B"])
def test_training_is_deterministic(texts, scheme):
    a = train_toy_tokenizer(texts, 40, scheme, seed=3)
    b = train_toy_tokenizer(texts, 40, scheme, seed=3)
    assert list(a.vocab.items()) == list(b.vocab.items())
    assert a.merges == b.merges and a.lexicon == b.lexicon


def test_end_offsets_example():
    vocab = {"<pad>": 0, "<bos>": 1, "<eos>": 2, "a": 3, "b": 4, "c": 5, "ab": 6}
    tok = ToyTokenizer("A", vocab, [("a", "b")])
    tt = encode_with_offsets(tok, "abc", add_specials=False)
    assert [tok.id_to_token[i] for i in tt.token_ids] == ["ab", "c"]
    np.testing.assert_array_equal(tt.end_offsets, [2, 3])
    tt = encode_with_offsets(tok, "abc", add_specials=True)
    assert tt.token_ids[0] == BOS and tt.end_offsets[0] == 0 and tt.special_mask[0]
    empty = encode_with_offsets(tok, "", add_specials=False)
    assert len(empty) == 0 and empty.end_offsets.size == 0


def test_eos_carries_zero_offset(pair):
    tt = encode_with_offsets(pair[0], "ab", add_eos=True)
    assert tt.special_mask[-1] and tt.end_offsets[-1] == 0


def test_unknown_character_rejected(pair):
    with pytest.raises(ValueError, match="outside the tokenizer alphabet"):
        pair[0].tokenize("abz")


def test_shared_vocabulary_example():
    def tok(chars):
        vocab = {"<pad>": 0, "<bos>": 1, "<eos>": 2}
        vocab.update({c: 3 + k for k, c in enumerate(chars)})
        return ToyTokenizer("B", vocab, lexicon=())

    shared = shared_vocabulary(tok("abcd"), tok("bce"))
    assert list(shared.shared_tokens) == ["b", "c"]
    np.testing.assert_array_equal(shared.teacher_index, [4, 5])
    np.testing.assert_array_equal(shared.student_index, [3, 4])
    same = shared_vocabulary(tok("abcd"), tok("abcd"))
    assert list(same.shared_tokens) == list("abcd")
    with pytest.raises(ValueError):
        shared_vocabulary(tok("ab"), tok("cd"))


def test_pair_disagrees_on_most_sentences(texts, pair):
    assert segmentation_disagreement(*pair, texts) >= 0.5


def test_same_tokenizer_mode(texts):
    a, b = train_tokenizer_pair(texts, 48, 48, teacher_scheme="A", student_scheme="A")
    assert a is b


@pytest.mark.parametrize("side", [0, 1])
def test_save_load_round_trip(tmp_path, pair, texts, side):
    tok = pair[side]
    tok.save(tmp_path / "t.tok")
    back = ToyTokenizer.load(tmp_path / "t.tok")
    assert dumps_tokenizer(back) == dumps_tokenizer(tok)
    for t in texts[:50]:
        assert back.tokenize(t) == tok.tokenize(t)


def test_loads_rejects_garbage():
    with pytest.raises(ValueError):
        loads_tokenizer("not a tokenizer\n")


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_round_trip_and_offsets_partition(pair, data):
    alphabet = pair[0].alphabet
    text = data.draw(st.text(alphabet=alphabet, min_size=0, max_size=40))
    for tok in pair:
        tt = encode_with_offsets(tok, text)
        assert tok.decode(tt.token_ids) == text
        content = ~tt.special_mask
        ends = tt.end_offsets[content]
        starts = np.concatenate([[0], ends[:-1]])
        pieces = [tok.id_to_token[i] for i in tt.token_ids[content]]
        assert all(text[s:e] == p for s, e, p in zip(starts, ends, pieces))
        assert (np.diff(ends) > 0).all()
        assert ends[-1] == len(text) if len(text) else ends.size == 0
