"""Training pairs: the JSONL rows the outline package's pipeline emits."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import DataError

LABELS = (0.0, 0.5, 1.0)


@dataclass(frozen=True)
class Pair:
    """One training example: two texts and the soft target for the second."""

    t0: str
    t1: str
    label: float

    def __post_init__(self) -> None:
        if not isinstance(self.t0, str) or not isinstance(self.t1, str):
            raise DataError("pair texts must be strings")
        if self.label not in LABELS:
            raise DataError(f"label must be one of {LABELS}, got {self.label!r}")
        if not self.t0.strip() or not self.t1.strip():
            raise DataError("pair texts must be non-empty")


def read_pairs(path: str | Path) -> list[Pair]:
    """Load {"t0", "t1", "label"} rows, one JSON object per line."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read pairs file {path}: {exc}") from exc
    pairs = []
    for i, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            pairs.append(Pair(doc["t0"], doc["t1"], float(doc["label"])))
        except (ValueError, KeyError, TypeError, DataError) as exc:
            raise DataError(f"pairs line {i + 1} malformed: {exc}") from exc
    if not pairs:
        raise DataError(f"no pairs in {path}")
    return pairs


def write_pairs(pairs: Iterable[Pair], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for pair in pairs:
            handle.write(json.dumps({"t0": pair.t0, "t1": pair.t1, "label": pair.label}) + "\n")
