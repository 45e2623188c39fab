"""Word counts, normalization, and cosine similarity."""

from __future__ import annotations

import math

import pytest
from hypothesis import given, strategies as st

from concoct.textutil import cosine, count_tokens, count_words, normalize_for_containment


def test_count_words():
    assert count_words("one two  three\nfour") == 4
    assert count_words("") == 0
    assert count_words("   ") == 0


def test_count_tokens_identity_ratio():
    assert count_tokens("a b c") == 3


def test_count_tokens_scales_and_rounds_up():
    # 3 words at 0.75 words per token is exactly 4 tokens.
    assert count_tokens("a b c", 0.75) == 4
    # 2 words at 0.75 is 2.67, which rounds up to 3.
    assert count_tokens("a b", 0.75) == 3


def test_count_tokens_rejects_bad_ratio():
    with pytest.raises(ValueError):
        count_tokens("a", 0.0)


def test_normalize_lowercases_and_collapses():
    assert normalize_for_containment("  The   Keeper\tWaits. ") == "the keeper waits"


def test_normalize_strips_terminal_punctuation():
    assert normalize_for_containment("Stop!?") == "stop"
    assert normalize_for_containment("wait...") == "wait"
    # Internal punctuation survives.
    assert normalize_for_containment("it's fine, really.") == "it's fine, really"


def test_cosine_basics():
    assert cosine([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)
    assert cosine([1.0, 2.0], [2.0, 4.0]) == pytest.approx(1.0)
    assert cosine([1.0, 0.0], [-1.0, 0.0]) == pytest.approx(-1.0)


def test_cosine_rejects_dim_mismatch_and_zero():
    with pytest.raises(ValueError):
        cosine([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        cosine([0.0, 0.0], [1.0, 2.0])


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=8).filter(lambda v: any(abs(x) > 1e-3 for x in v)))
def test_cosine_self_similarity_is_one(vector):
    assert cosine(vector, vector) == pytest.approx(1.0)


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=8).filter(lambda v: any(abs(x) > 1e-3 for x in v)),
       st.lists(st.floats(-10, 10), min_size=2, max_size=8).filter(lambda v: any(abs(x) > 1e-3 for x in v)))
def test_cosine_bounded(a, b):
    if len(a) != len(b):
        return
    assert -1.0 - 1e-9 <= cosine(a, b) <= 1.0 + 1e-9


@given(st.text())
def test_normalize_idempotent(text):
    once = normalize_for_containment(text)
    assert normalize_for_containment(once) == once
