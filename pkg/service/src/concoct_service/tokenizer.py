"""Deterministic hashing tokenizer.

Words map to fixed vocabulary buckets via a stable content hash, so no
vocabulary file ships with a checkpoint and encoding never depends on
interpreter state.  A pair encodes as t0, one separator token, t1,
truncated to the model's sequence limit with both texts guaranteed at
least one surviving token.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

from .errors import ValidationError

PAD_ID = 0
SEP_ID = 1
_RESERVED = 2

_TOKEN = re.compile(r"[a-z0-9]+|[^\sa-z0-9]")


@dataclass(frozen=True)
class EncodedPair:
    ids: list[int]

    @property
    def length(self) -> int:
        return len(self.ids)


class HashTokenizer:
    """Maps text to bucket ids in [2, vocab_size) with sha1 hashing."""

    def __init__(self, vocab_size: int, max_len: int) -> None:
        if vocab_size <= _RESERVED:
            raise ValidationError(f"vocab_size must be > {_RESERVED}, got {vocab_size}")
        if max_len < 3:
            raise ValidationError(f"max_len must be >= 3, got {max_len}")
        self.vocab_size = vocab_size
        self.max_len = max_len

    def tokenize(self, text: str) -> list[int]:
        tokens = _TOKEN.findall(text.lower())
        buckets = self.vocab_size - _RESERVED
        ids = []
        for token in tokens:
            digest = hashlib.sha1(token.encode("utf-8")).digest()
            ids.append(_RESERVED + int.from_bytes(digest[:8], "big") % buckets)
        return ids

    def encode_pair(self, t0: str, t1: str) -> EncodedPair:
        """Encode "t0 <sep> t1", truncated to ``max_len`` positions.

        Truncation trims the tail of each text but always keeps the
        separator and at least one token of t1.
        """
        if not t0.strip():
            raise ValidationError("t0 must be non-empty")
        if not t1.strip():
            raise ValidationError("t1 must be non-empty")
        ids0 = self.tokenize(t0)
        ids1 = self.tokenize(t1)
        if not ids0 or not ids1:
            raise ValidationError("pair texts must contain at least one token each")
        ids0 = ids0[: self.max_len - 2]
        remaining = self.max_len - len(ids0) - 1
        ids1 = ids1[:remaining]
        return EncodedPair(ids0 + [SEP_ID] + ids1)
