import pytest
from hypothesis import given, settings, strategies as st

from treetex.corpus import GrammarConfig, generate
from treetex.tokenizer import detokenize, tokenize_raw, tokenize_spaced
from treetex.vocab import (
    RESERVED_TOKENS,
    STRUCTURAL_TOKENS,
    TokenClass,
    TokenSeq,
    UnknownTokenError,
    Vocab,
    classify,
)


@pytest.fixture(scope="module")
def vocab():
    return Vocab.default()


def test_default_vocab_size(vocab):
    assert len(vocab) >= 100 + len(RESERVED_TOKENS)


def test_reserved_ids(vocab):
    assert vocab.pad_id == 0
    assert vocab.sos_id == 1
    assert vocab.eos_id == 2
    assert len({vocab.pad_id, vocab.sos_id, vocab.eos_id}) == 3


def test_ids_dense_and_unique(vocab):
    assert len(set(vocab.symbols)) == len(vocab)
    for i, tok in enumerate(vocab.symbols):
        assert vocab.id(tok) == i


def test_exactly_four_structural_tokens(vocab):
    structural = [t for t in vocab.symbols if classify(t) is TokenClass.STRUCTURAL]
    assert sorted(structural) == sorted(STRUCTURAL_TOKENS)


def test_classification_function_of_string_only():
    assert classify("\\frac") is TokenClass.COMMAND
    assert classify("\\{") is TokenClass.COMMAND
    assert classify("^") is TokenClass.STRUCTURAL
    assert classify("x") is TokenClass.SYMBOL
    assert classify("[") is TokenClass.SYMBOL


def test_duplicate_token_rejected():
    with pytest.raises(ValueError):
        Vocab(["a", "a"])


def test_vocab_file_roundtrip(tmp_path, vocab):
    path = tmp_path / "vocab.txt"
    vocab.save(path)
    again = Vocab.from_file(path)
    assert again == vocab
    # line k gets id k + 3
    lines = path.read_text().splitlines()
    assert again.id(lines[0]) == 3
    assert again.id(lines[10]) == 13


def test_tokenize_spaced_golden(vocab):
    seq = tokenize_spaced("3 ^ { 2 } - 1 = 8", vocab)
    assert seq.tokens() == ("3", "^", "{", "2", "}", "-", "1", "=", "8")
    assert len(seq) == 9


def test_tokenize_spaced_empty(vocab):
    assert len(tokenize_spaced("", vocab)) == 0
    assert len(tokenize_spaced("   ", vocab)) == 0


def test_tokenize_spaced_frac(vocab):
    seq = tokenize_spaced("\\frac { a } { b }", vocab)
    assert seq.tokens() == ("\\frac", "{", "a", "}", "{", "b", "}")


def test_tokenize_spaced_unknown(vocab):
    with pytest.raises(UnknownTokenError) as err:
        tokenize_spaced("a \\nosuchcmd b", vocab)
    assert err.value.chunk == "\\nosuchcmd"
    assert err.value.position == 1


def test_tokenize_raw_script(vocab):
    assert tokenize_raw("x^{2}", vocab).tokens() == ("x", "^", "{", "2", "}")


def test_tokenize_raw_single_char(vocab):
    assert tokenize_raw("a", vocab).tokens() == ("a",)


def test_tokenize_raw_command_longest_match(vocab):
    assert tokenize_raw("\\sqrt{b}", vocab).tokens() == ("\\sqrt", "{", "b", "}")


def test_tokenize_raw_escaped_brace(vocab):
    assert tokenize_raw("\\{x\\}", vocab).tokens() == ("\\{", "x", "\\}")


def test_tokenize_raw_whitespace_mix(vocab):
    assert tokenize_raw(" x ^2", vocab).tokens() == ("x", "^", "2")


def test_detokenize_examples(vocab):
    assert detokenize(TokenSeq((), vocab)) == ""
    seq = tokenize_spaced("3 ^ { 2 }", vocab)
    assert detokenize(seq) == "3 ^ { 2 }"


def test_spaced_round_trip_on_generated(vocab):
    records = generate(GrammarConfig(seed=11), 100)
    for r in records:
        seq = TokenSeq.from_tokens(r.tokens, vocab)
        assert tokenize_spaced(detokenize(seq), vocab) == seq


def test_raw_round_trip_space_free(vocab):
    records = generate(GrammarConfig(seed=12), 100)
    for r in records:
        seq = TokenSeq.from_tokens(r.tokens, vocab)
        squeezed = detokenize(seq).replace(" ", "")
        assert tokenize_raw(squeezed, vocab) == seq


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_spaced_round_trip_random_ids(data, vocab=None):
    vocab = Vocab.default()
    usable = [i for i in range(3, len(vocab))]
    ids = data.draw(st.lists(st.sampled_from(usable), max_size=30))
    seq = TokenSeq(tuple(ids), vocab)
    assert tokenize_spaced(detokenize(seq), vocab) == seq


def test_token_seq_validates_range(vocab):
    with pytest.raises(ValueError):
        TokenSeq((len(vocab),), vocab)
