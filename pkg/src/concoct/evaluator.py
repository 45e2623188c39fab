"""Pairwise concreteness scoring and vaguest-leaf selection.

A compare backend maps an ordered pair of texts to the probability that the
second is more concrete than the first.  No symmetry is assumed: p(a, b) and
p(b, a) are independent lookups.  Scores are cached per run on the ordered
pair, so repeated leaves cost one backend call.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import httpx

from .errors import BackendError, ValidationError
from .gateway import Gateway, RetryPolicy
from .outline import OutlineNode
from .prompts import build_pairwise_judge_prompt, parse_pairwise_judge_reply

logger = logging.getLogger(__name__)


class CompareBackend(Protocol):
    def compare(self, t0: str, t1: str) -> float: ...


def _check_probability(p: float, origin: str) -> float:
    if not isinstance(p, (int, float)) or not 0.0 <= float(p) <= 1.0:
        raise BackendError(f"{origin} produced a score outside [0, 1]: {p!r}")
    return float(p)


class ScriptedEvaluator:
    """Serves scores from a fixture table; a missing pair is a hard error."""

    def __init__(self, table: dict[tuple[str, str], float]) -> None:
        self._table = {pair: _check_probability(p, "scripted table") for pair, p in table.items()}

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedEvaluator":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        try:
            table = {(row["t0"], row["t1"]): row["p"] for row in doc["pairs"]}
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"scores file {path} malformed: {exc}") from exc
        return cls(table)

    def compare(self, t0: str, t1: str) -> float:
        try:
            return self._table[(t0, t1)]
        except KeyError:
            raise BackendError(f"no scripted score for pair ({t0!r}, {t1!r})") from None


class HttpEvaluator:
    """Client for the compare service: POST /compare and /compare_batch."""

    def __init__(self, base_url: str, retry: RetryPolicy | None = None, timeout: float = 60.0) -> None:
        self._base_url = base_url.rstrip("/")
        self._retry = retry or RetryPolicy()
        self._client = httpx.Client(timeout=timeout)

    def compare(self, t0: str, t1: str) -> float:
        url = f"{self._base_url}/compare"
        body = {"t0": t0, "t1": t1}
        response = self._retry.run(lambda: self._client.post(url, json=body), "compare")
        if response.status_code != 200:
            raise BackendError(f"compare returned HTTP {response.status_code}")
        try:
            p = response.json()["p"]
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"compare reply malformed: {exc}") from exc
        return _check_probability(p, "compare service")

    def compare_batch(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        url = f"{self._base_url}/compare_batch"
        body = {"pairs": [[t0, t1] for t0, t1 in pairs]}
        response = self._retry.run(lambda: self._client.post(url, json=body), "compare_batch")
        if response.status_code != 200:
            raise BackendError(f"compare_batch returned HTTP {response.status_code}")
        try:
            scores = response.json()["p"]
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"compare_batch reply malformed: {exc}") from exc
        if not isinstance(scores, list) or len(scores) != len(pairs):
            raise BackendError("compare_batch reply length does not match request")
        return [_check_probability(p, "compare service") for p in scores]


class JudgeEvaluator:
    """Scores pairs by asking a chat model which passage is more detailed.

    The judge prompt runs at temperature 0; an unparseable reply counts as a
    0.5 tie rather than an error.
    """

    def __init__(self, gateway: Gateway, max_tokens: int = 16) -> None:
        self._gateway = gateway
        self._max_tokens = max_tokens

    def compare(self, t0: str, t1: str) -> float:
        reply = self._gateway.chat(build_pairwise_judge_prompt(t0, t1), temperature=0.0,
                                   max_tokens=self._max_tokens)
        return parse_pairwise_judge_reply(reply)


class CachingEvaluator:
    """Run-scoped cache over any compare backend, keyed on the ordered pair."""

    def __init__(self, inner: CompareBackend) -> None:
        self._inner = inner
        self._cache: dict[tuple[str, str], float] = {}
        self._lock = threading.Lock()

    def compare(self, t0: str, t1: str) -> float:
        key = (t0, t1)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        p = _check_probability(self._inner.compare(t0, t1), "compare backend")
        with self._lock:
            self._cache.setdefault(key, p)
            return self._cache[key]


def m_avg(evaluator: CompareBackend, target: str, references: Sequence[str]) -> float:
    """Mean concreteness of ``target`` against each reference text.

    Each term scores the pair (reference, target), i.e. the probability that
    the target is the more concrete of the two.  An empty reference set is
    the neutral 0.5 by convention.
    """
    if not references:
        return 0.5
    total = 0.0
    for reference in references:
        total += _check_probability(evaluator.compare(reference, target), "compare backend")
    return total / len(references)


@dataclass(frozen=True)
class LeafScore:
    leaf_id: str
    score: float


def score_leaves(evaluator: CompareBackend, leaves: Sequence[OutlineNode]) -> list[LeafScore]:
    """Mean concreteness of every leaf against the other leaves."""
    if not leaves:
        raise ValidationError("cannot score an empty leaf list")
    texts = [leaf.main_plot for leaf in leaves]
    scores = []
    for i, leaf in enumerate(leaves):
        references = texts[:i] + texts[i + 1 :]
        scores.append(LeafScore(leaf.id, m_avg(evaluator, texts[i], references)))
    return scores


def select_vaguest(
    evaluator: CompareBackend,
    leaves: Sequence[OutlineNode],
    excluded_ids: frozenset[str] | set[str] = frozenset(),
) -> tuple[OutlineNode, list[LeafScore]]:
    """Pick the least concrete eligible leaf; ties go to the earliest leaf.

    Scores are computed over the full leaf list (excluded leaves still count
    as references) but excluded ids cannot be selected.
    """
    scores = score_leaves(evaluator, leaves)
    eligible = [i for i, leaf in enumerate(leaves) if leaf.id not in excluded_ids]
    if not eligible:
        raise ValidationError("all leaves are excluded from selection")
    best = min(eligible, key=lambda i: scores[i].score)
    return leaves[best], scores
