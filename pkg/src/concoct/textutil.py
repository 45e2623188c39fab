"""Small text helpers shared by the engine, dataset, and story modules."""

from __future__ import annotations

import math
import re

_WHITESPACE = re.compile(r"\s+")
_TERMINAL_PUNCT = ".!?,;:…"


def count_words(text: str) -> int:
    """Number of whitespace-delimited words in ``text``."""
    return len(text.split())


def count_tokens(text: str, words_per_token: float = 1.0) -> int:
    """Approximate token count as scaled whitespace words.

    ``words_per_token`` is the documented conversion constant; 1.0 treats
    every word as one token, 0.75 means four tokens per three words.
    """
    if words_per_token <= 0:
        raise ValueError("words_per_token must be positive")
    return math.ceil(count_words(text) / words_per_token)


def normalize_for_containment(text: str) -> str:
    """Lowercase, collapse runs of whitespace, and strip terminal punctuation."""
    collapsed = _WHITESPACE.sub(" ", text.strip().lower())
    return collapsed.rstrip(_TERMINAL_PUNCT).rstrip()


def cosine(a: list[float], b: list[float]) -> float:
    """Cosine similarity of two equal-length vectors."""
    if len(a) != len(b):
        raise ValueError(f"vector dims differ: {len(a)} vs {len(b)}")
    dot = math.fsum(x * y for x, y in zip(a, b))
    norm_a = math.sqrt(math.fsum(x * x for x in a))
    norm_b = math.sqrt(math.fsum(y * y for y in b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValueError("cosine undefined for zero-length vector")
    return dot / (norm_a * norm_b)
