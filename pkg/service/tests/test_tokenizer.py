"""Hash tokenizer: id ranges, separator placement, truncation."""

from __future__ import annotations

import pytest

from concoct_service.errors import ValidationError
from concoct_service.tokenizer import PAD_ID, SEP_ID, HashTokenizer


@pytest.fixture
def tok() -> HashTokenizer:
    return HashTokenizer(vocab_size=4096, max_len=512)


class TestTokenize:
    def test_word_ids_avoid_reserved(self, tok):
        ids = tok.tokenize("the 12 lighthouse-keeper logged, briefly.")
        assert ids
        assert all(2 <= i < 4096 for i in ids)

    def test_deterministic(self, tok):
        text = "a door at the base of the tower"
        assert tok.tokenize(text) == tok.tokenize(text)

    def test_case_insensitive(self, tok):
        assert tok.tokenize("Lighthouse KEEPER") == tok.tokenize("lighthouse keeper")

    def test_punctuation_is_separate(self, tok):
        assert len(tok.tokenize("door, open")) == 3


class TestEncodePair:
    def test_single_separator(self, tok):
        ids = tok.encode_pair("one two three", "four five").ids
        assert ids.count(SEP_ID) == 1
        assert PAD_ID not in ids

    def test_layout(self, tok):
        ids = tok.encode_pair("one two", "three").ids
        sep = ids.index(SEP_ID)
        assert ids[:sep] == tok.tokenize("one two")
        assert ids[sep + 1:] == tok.tokenize("three")

    def test_empty_side_rejected(self, tok):
        with pytest.raises(ValidationError):
            tok.encode_pair("", "b")
        with pytest.raises(ValidationError):
            tok.encode_pair("a", "")
        with pytest.raises(ValidationError):
            tok.encode_pair("a", "   ")

    def test_truncation_keeps_both_sides(self):
        tok = HashTokenizer(vocab_size=4096, max_len=16)
        long = " ".join(f"w{i}" for i in range(100))
        ids = tok.encode_pair(long, long).ids
        assert len(ids) == 16
        sep = ids.index(SEP_ID)
        # First text may fill at most max_len - 2, leaving room for the
        # separator and at least one token of the second text.
        assert 1 <= sep <= 14
        assert len(ids) - sep - 1 >= 1

    def test_short_pair_not_padded(self, tok):
        ids = tok.encode_pair("one", "two").ids
        assert len(ids) == 3


class TestConstruction:
    def test_rejects_tiny_vocab(self):
        with pytest.raises(ValidationError):
            HashTokenizer(vocab_size=2, max_len=512)

    def test_rejects_tiny_max_len(self):
        with pytest.raises(ValidationError):
            HashTokenizer(vocab_size=4096, max_len=2)
