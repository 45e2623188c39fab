"""Evaluation harness: score discretization, comparator metrics, probes.

Soft labels live in {0, 0.5, 1}.  A prediction in (0.5 - band, 0.5 + band)
counts as neutral; everything else is a committed call.  The seven summary
metrics decompose those calls against the labels, and two probe tasks
exercise a comparator end to end: finding a marked leaf in an outline and
judging system pairs with a four-question A/B prompt.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass
from typing import Sequence

from .errors import FormatError, ValidationError
from .evaluator import CompareBackend, m_avg
from .gateway import Gateway
from .prompts import (
    build_outline_pair_judge_prompt,
    build_story_pair_judge_prompt,
    parse_four_letter_reply,
)

logger = logging.getLogger(__name__)

LABELS = (0.0, 0.5, 1.0)
JUDGE_QUESTIONS = ("pacing", "coherent", "premise", "interesting")

_CLAMP = 1e-7


def discretize(p: float, band: float = 0.1) -> float:
    """Map a probability to {0, 0.5, 1} with a neutral band around 0.5."""
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"probability must be in [0, 1], got {p}")
    if not 0.0 <= band < 0.5:
        raise ValidationError(f"band must be in [0, 0.5), got {band}")
    if p < 0.5 - band:
        return 0.0
    if p > 0.5 + band:
        return 1.0
    return 0.5


def discretize_binary(p: float) -> float:
    """Two-way mode: ties at exactly 0.5 round up to 1."""
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"probability must be in [0, 1], got {p}")
    return 1.0 if p >= 0.5 else 0.0


@dataclass(frozen=True)
class Prediction:
    """A comparator output paired with its soft label."""

    p: float
    label: float

    def __post_init__(self) -> None:
        if self.label not in LABELS:
            raise ValidationError(f"label must be one of {LABELS}, got {self.label}")


def bce_loss(p: float, label: float) -> float:
    """Binary cross entropy with the probability clamped away from 0 and 1."""
    clamped = min(max(p, _CLAMP), 1.0 - _CLAMP)
    return -(label * math.log(clamped) + (1.0 - label) * math.log(1.0 - clamped))


def metrics(predictions: Sequence[Prediction], band: float = 0.1) -> dict[str, float]:
    """The seven comparator metrics over a prediction set.

    Counts below use #[pred, label] cells of the discretized confusion table:
    accuracy is the matched-cell mass, neutral and partial split the
    prediction mass by commitment, and false_neutral / true_partial /
    major_false decompose the committed-label mass.
    """
    if not predictions:
        raise ValidationError("metrics need at least one prediction")
    counts: dict[tuple[float, float], int] = {}
    for prediction in predictions:
        key = (discretize(prediction.p, band), prediction.label)
        counts[key] = counts.get(key, 0) + 1
    n = len(predictions)

    def cell(pred: float, label: float) -> int:
        return counts.get((pred, label), 0)

    neutral_preds = sum(cell(0.5, label) for label in LABELS)
    return {
        "accuracy": (cell(0.0, 0.0) + cell(0.5, 0.5) + cell(1.0, 1.0)) / n,
        "loss": sum(bce_loss(p.p, p.label) for p in predictions) / n,
        "neutral": neutral_preds / n,
        "partial": (n - neutral_preds) / n,
        "false_neutral": (cell(0.5, 0.0) + cell(0.5, 1.0)) / n,
        "true_partial": (cell(0.0, 0.0) + cell(1.0, 1.0)) / n,
        "major_false": (cell(0.0, 1.0) + cell(1.0, 0.0)) / n,
    }


@dataclass(frozen=True)
class MarkedResult:
    """Outcome of one marked-leaf probe."""

    predicted_index: int
    marked_index: int
    scores: tuple[float, ...]
    mode: str

    @property
    def correct(self) -> bool:
        return self.predicted_index == self.marked_index

    @property
    def decisions(self) -> tuple[bool, ...]:
        return tuple(i == self.predicted_index for i in range(len(self.scores)))


def marked_node_task(
    leaf_texts: Sequence[str],
    marked_index: int,
    mode: str,
    evaluator: CompareBackend,
) -> MarkedResult:
    """Find the leaf a comparator deems most extreme.

    ``mode`` "vague" predicts the lowest mean score, "detailed" the highest;
    ties resolve to the earliest index.
    """
    if mode not in ("vague", "detailed"):
        raise ValidationError(f"mode must be 'vague' or 'detailed', got {mode!r}")
    if not 0 <= marked_index < len(leaf_texts):
        raise ValidationError(f"marked_index {marked_index} out of range")
    scores = []
    for i, text in enumerate(leaf_texts):
        references = [t for j, t in enumerate(leaf_texts) if j != i]
        scores.append(m_avg(evaluator, text, references))
    pick = min if mode == "vague" else max
    predicted = pick(range(len(scores)), key=lambda i: scores[i])
    return MarkedResult(predicted, marked_index, tuple(scores), mode)


def marked_accuracy(results: Sequence[MarkedResult]) -> float:
    if not results:
        raise ValidationError("marked_accuracy needs at least one result")
    return sum(1 for r in results if r.correct) / len(results)


def marked_f1(results: Sequence[MarkedResult]) -> float:
    """Corpus-level F1 over per-node marked/predicted decisions."""
    tp = fp = fn = 0
    for result in results:
        for i, predicted_positive in enumerate(result.decisions):
            gold_positive = i == result.marked_index
            if predicted_positive and gold_positive:
                tp += 1
            elif predicted_positive:
                fp += 1
            elif gold_positive:
                fn += 1
    denominator = 2 * tp + fp + fn
    return 2 * tp / denominator if denominator else 0.0


@dataclass(frozen=True)
class JudgePairItem:
    """One A/B comparison item: a shared premise and two renderings."""

    premise: str
    a: str
    b: str


def judge_pairs(
    gateway: Gateway,
    items: Sequence[JudgePairItem],
    kind: str,
    seed: int = 0,
    both_orientations: bool = False,
    max_tokens: int = 16,
) -> dict[str, dict[str, float]]:
    """Judge system pairs with the four-question prompt at temperature 0.

    Presentation order is counterbalanced by a seeded coin per item (or both
    orientations are judged when ``both_orientations``); malformed replies
    count as no-decision for all four questions.
    """
    if kind not in ("story", "outline"):
        raise ValidationError(f"kind must be 'story' or 'outline', got {kind!r}")
    build = build_story_pair_judge_prompt if kind == "story" else build_outline_pair_judge_prompt
    rng = random.Random(seed)
    tallies = {question: {"a": 0, "b": 0, "no_decision": 0} for question in JUDGE_QUESTIONS}

    def one_round(item: JudgePairItem, swapped: bool) -> None:
        first, second = (item.b, item.a) if swapped else (item.a, item.b)
        reply = gateway.chat(build(item.premise, first, second), temperature=0.0,
                             max_tokens=max_tokens)
        try:
            letters = parse_four_letter_reply(reply)
        except FormatError:
            logger.warning("malformed judge reply for item; counting no-decision: %r", reply[:80])
            for question in JUDGE_QUESTIONS:
                tallies[question]["no_decision"] += 1
            return
        for question, letter in zip(JUDGE_QUESTIONS, letters):
            winner_is_first = letter == "A"
            winner = ("b" if winner_is_first else "a") if swapped else ("a" if winner_is_first else "b")
            tallies[question][winner] += 1

    for item in items:
        if both_orientations:
            one_round(item, swapped=False)
            one_round(item, swapped=True)
        else:
            one_round(item, swapped=rng.random() < 0.5)

    report = {}
    for question, tally in tallies.items():
        total = tally["a"] + tally["b"] + tally["no_decision"]
        report[question] = {
            "a_wins": tally["a"],
            "b_wins": tally["b"],
            "no_decision": tally["no_decision"],
            "a_rate": tally["a"] / total if total else 0.0,
            "b_rate": tally["b"] / total if total else 0.0,
        }
    return report
