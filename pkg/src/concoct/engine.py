"""Outline expansion strategies.

The vaguest-first strategy repeatedly scores all leaves with a pairwise
concreteness evaluator, expands the least concrete one, and accepts child
points only when they clear two guards: a similarity guard (no containment,
embedding cosine at most the cutoff) and a concreteness guard (mean score
gain strictly above a budget-decaying threshold).  Failed children are
rewritten in place up to three times, whole expansions restart with a
temperature bump up to two times, and a leaf that still fails is
blacklisted until the next successful expansion.

The breadth-first baseline expands every leaf level by level to a uniform
depth with the same prompts and no guards.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .errors import FormatError, ValidationError
from .evaluator import CompareBackend, LeafScore, m_avg, score_leaves
from .gateway import Gateway
from .outline import Outline, OutlineNode, attach_children, leaves, with_metadata
from .prompts import MAX_CHILDREN, ParsedPoint, build_expansion_prompt, build_rewrite_prompt, parse_point_blocks
from .textutil import cosine, normalize_for_containment

logger = logging.getLogger(__name__)

MIN_CHILDREN = 2

# Threshold schedule: per-step decay rate and the neutral score midpoint.
STEP_DECAY = 0.001
SCORE_MIDPOINT = 0.5

REASON_CONTAINS_PARENT = "contains-parent"
REASON_PARENT_CONTAINS = "parent-contains"
REASON_COSINE = "cosine-too-high"
REASON_DELTA = "delta-below-threshold"


@dataclass(frozen=True)
class EngineConfig:
    """Knobs of the expansion state machine."""

    initial_temperature: float = 0.7
    temperature_increment: float = 0.3
    max_temperature: float = 1.5
    rewrite_rounds: int = 3
    max_restarts: int = 2
    similarity_cutoff: float = 0.9
    max_tokens: int = 1024


def threshold(remaining_steps: int, parent_mavg: float) -> float:
    """Required concreteness gain for the current expansion.

    Decays linearly with the remaining budget and is capped by half the
    parent's distance below the neutral midpoint, clamped at zero.
    """
    if remaining_steps < 0:
        raise ValidationError(f"remaining_steps must be >= 0, got {remaining_steps}")
    if not 0.0 <= parent_mavg <= 1.0:
        raise ValidationError(f"parent_mavg must be in [0, 1], got {parent_mavg}")
    return max(0.0, min(STEP_DECAY * remaining_steps, (SCORE_MIDPOINT - parent_mavg) / 2))


@dataclass
class ChildVerdict:
    """Guard outcome for one candidate child."""

    slot: int
    text: str
    characters: tuple[str, ...]
    reasons: tuple[str, ...]
    cosine: float | None
    delta: float | None
    threshold: float | None

    @property
    def accepted(self) -> bool:
        return not self.reasons

    def to_json(self) -> dict[str, Any]:
        return {
            "slot": self.slot,
            "text": self.text,
            "characters": list(self.characters),
            "reasons": list(self.reasons),
            "cosine": self.cosine,
            "delta": self.delta,
            "threshold": self.threshold,
            "accepted": self.accepted,
        }


def similarity_guard(
    child_text: str, parent_text: str, gateway: Gateway, cutoff: float
) -> tuple[tuple[str, ...], float | None]:
    """Containment and cosine checks between a candidate and its parent.

    Containment is tested on normalized text in both directions; cosine is
    only computed when containment passes, and similarity strictly above the
    cutoff is rejected.
    """
    child_norm = normalize_for_containment(child_text)
    parent_norm = normalize_for_containment(parent_text)
    reasons = []
    if parent_norm and parent_norm in child_norm:
        reasons.append(REASON_CONTAINS_PARENT)
    if child_norm and child_norm in parent_norm:
        reasons.append(REASON_PARENT_CONTAINS)
    if reasons:
        return tuple(reasons), None
    value = cosine(gateway.embed(child_text), gateway.embed(parent_text))
    if value > cutoff:
        return (REASON_COSINE,), value
    return (), value


def _judge_candidate(
    candidate: ParsedPoint,
    parent: OutlineNode,
    references: list[str],
    parent_mavg: float,
    required_gain: float,
    evaluator: CompareBackend,
    gateway: Gateway,
    config: EngineConfig,
) -> ChildVerdict:
    reasons, cos_value = similarity_guard(candidate.main_plot, parent.main_plot, gateway,
                                          config.similarity_cutoff)
    delta = None
    recorded_threshold = None
    if not reasons and references:
        delta = m_avg(evaluator, candidate.main_plot, references) - parent_mavg
        recorded_threshold = required_gain
        if delta <= required_gain:
            reasons = (REASON_DELTA,)
    return ChildVerdict(candidate.position, candidate.main_plot, candidate.characters,
                        tuple(reasons), cos_value, delta, recorded_threshold)


@dataclass
class ExpansionOutcome:
    """Result of one expand_node call, with full per-attempt audit data."""

    status: str
    children: list[tuple[str, tuple[str, ...]]]
    parent_mavg: float
    required_gain: float
    bypass: bool
    attempts: list[dict[str, Any]] = field(default_factory=list)

    @property
    def temperatures(self) -> list[float]:
        return [attempt["temperature"] for attempt in self.attempts]


def expand_node(
    outline: Outline,
    target: OutlineNode,
    evaluator: CompareBackend,
    gateway: Gateway,
    remaining_steps: int,
    config: EngineConfig | None = None,
) -> ExpansionOutcome:
    """Try to expand ``target`` into guarded child points.

    One initial attempt plus up to ``max_restarts`` restarts, each at a
    temperature raised by the configured increment; within an attempt, up to
    ``rewrite_rounds`` rewrite prompts repair failing slots in place.  The
    concreteness guard is bypassed when the target is the only leaf, which
    happens exactly once, on the first expansion of the premise.
    """
    config = config or EngineConfig()
    references = [leaf.main_plot for leaf in leaves(outline) if leaf.id != target.id]
    parent_score = m_avg(evaluator, target.main_plot, references)
    required_gain = threshold(remaining_steps, parent_score)
    bypass = not references

    attempts: list[dict[str, Any]] = []
    temperature = config.initial_temperature
    for _ in range(config.max_restarts + 1):
        attempt = _run_attempt(outline, target, references, parent_score, required_gain,
                               evaluator, gateway, config, temperature)
        attempts.append(attempt["trace"])
        if attempt["children"] is not None:
            return ExpansionOutcome("expanded", attempt["children"], parent_score,
                                    required_gain, bypass, attempts)
        temperature = min(temperature + config.temperature_increment, config.max_temperature)
    return ExpansionOutcome("gave_up", [], parent_score, required_gain, bypass, attempts)


def _run_attempt(
    outline: Outline,
    target: OutlineNode,
    references: list[str],
    parent_score: float,
    required_gain: float,
    evaluator: CompareBackend,
    gateway: Gateway,
    config: EngineConfig,
    temperature: float,
) -> dict[str, Any]:
    trace: dict[str, Any] = {"temperature": temperature, "parse_error": None,
                             "candidates": [], "verdicts": [], "rewrites": []}
    prompt = build_expansion_prompt(outline, target.id)
    reply = gateway.chat(prompt, temperature, config.max_tokens)
    try:
        parsed = parse_point_blocks(reply, target.id)
    except FormatError as exc:
        trace["parse_error"] = str(exc)
        return {"children": None, "trace": trace}
    if len(parsed) < MIN_CHILDREN:
        trace["parse_error"] = f"only {len(parsed)} candidate children, need {MIN_CHILDREN}"
        return {"children": None, "trace": trace}

    # Renumber slots contiguously so rewrite prompts and verdicts align.
    candidates = [ParsedPoint(i + 1, p.main_plot, p.characters) for i, p in enumerate(parsed)]
    verdicts = {
        c.position: _judge_candidate(c, target, references, parent_score, required_gain,
                                     evaluator, gateway, config)
        for c in candidates
    }
    failed = {slot for slot, verdict in verdicts.items() if not verdict.accepted}

    for _ in range(config.rewrite_rounds):
        if not failed:
            break
        rewrite: dict[str, Any] = {"failed_slots": sorted(failed), "parse_error": None,
                                   "verdicts": []}
        trace["rewrites"].append(rewrite)
        prompt = build_rewrite_prompt(outline, target.id, candidates, failed)
        reply = gateway.chat(prompt, temperature, config.max_tokens)
        try:
            rewritten = {p.position: p for p in parse_point_blocks(reply, target.id)}
        except FormatError as exc:
            rewrite["parse_error"] = str(exc)
            continue
        for slot in sorted(failed):
            replacement = rewritten.get(slot)
            if replacement is None:
                continue
            candidate = ParsedPoint(slot, replacement.main_plot, replacement.characters)
            verdict = _judge_candidate(candidate, target, references, parent_score,
                                       required_gain, evaluator, gateway, config)
            candidates[slot - 1] = candidate
            verdicts[slot] = verdict
            rewrite["verdicts"].append(verdict.to_json())
            if verdict.accepted:
                failed.discard(slot)

    trace["candidates"] = [c.main_plot for c in candidates]
    trace["verdicts"] = [verdicts[c.position].to_json() for c in candidates]
    if failed:
        return {"children": None, "trace": trace}
    return {"children": [(c.main_plot, c.characters) for c in candidates], "trace": trace}


class TraceWriter:
    """Collects run trace events and optionally appends them to a JSONL file."""

    def __init__(self, path: str | Path | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self.events: list[dict[str, Any]] = []
        if self.path is not None:
            self.path.write_text("", encoding="utf-8")

    def write(self, event: dict[str, Any]) -> None:
        self.events.append(event)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(json.dumps(event, ensure_ascii=False) + "\n")


def _score_table(scores: Sequence[LeafScore]) -> list[list[Any]]:
    return [[s.leaf_id, s.score] for s in scores]


def run_vaguest_first(
    premise: str,
    total_steps: int,
    evaluator: CompareBackend,
    gateway: Gateway,
    config: EngineConfig | None = None,
    seed: int | None = None,
    trace: TraceWriter | None = None,
    models: dict[str, str] | None = None,
) -> Outline:
    """Generate an outline by repeatedly expanding the vaguest leaf.

    Only successful expansions consume budget.  A leaf whose expansion gives
    up is blacklisted until the next success and the next-vaguest leaf is
    tried within the same step; when every leaf is blacklisted the partial
    outline is returned with a warning flag in its metadata.
    """
    if not premise.strip():
        raise ValidationError("premise must be non-empty")
    if total_steps < 1:
        raise ValidationError(f"total_steps must be >= 1, got {total_steps}")
    config = config or EngineConfig()
    trace = trace or TraceWriter()

    outline = Outline(premise)
    remaining = total_steps
    step = 0
    blacklist: set[str] = set()
    warning = None
    while remaining > 0:
        current = leaves(outline)
        eligible = [leaf for leaf in current if leaf.id not in blacklist]
        if not eligible:
            warning = "all-leaves-blacklisted"
            break
        step += 1
        scores = score_leaves(evaluator, current)
        by_leaf = {score.leaf_id: score.score for score in scores}
        order = sorted(range(len(current)), key=lambda i: scores[i].score)
        expanded = False
        for index in order:
            target = current[index]
            if target.id in blacklist:
                continue
            outcome = expand_node(outline, target, evaluator, gateway, remaining, config)
            trace.write({
                "step": step,
                "selected_leaf": target.id,
                "score_table": _score_table(scores),
                "parent_mavg": by_leaf[target.id],
                "threshold": outcome.required_gain,
                "remaining_before": remaining,
                "bypass": outcome.bypass,
                "candidates": outcome.attempts[-1]["candidates"],
                "verdicts": outcome.attempts[-1]["verdicts"],
                "temperatures": outcome.temperatures,
                "attempts": outcome.attempts,
                "outcome": outcome.status,
            })
            if outcome.status == "expanded":
                outline = attach_children(outline, target.id, outcome.children)
                remaining -= 1
                blacklist.clear()
                expanded = True
                break
            blacklist.add(target.id)
            logger.warning("expansion of leaf %r gave up; trying next-vaguest", target.id)
        if not expanded:
            warning = "all-leaves-blacklisted"
            break

    metadata: dict[str, Any] = {
        "strategy": "vaguest-first",
        "requested_steps": total_steps,
        "expansions": total_steps - remaining,
        "models": dict(models or {}),
        "seed": seed,
    }
    if warning:
        metadata["warning"] = warning
        logger.warning("run stopped early: %s", warning)
    return with_metadata(outline, metadata)


def run_breadth_first(
    premise: str,
    depth: int,
    gateway: Gateway,
    config: EngineConfig | None = None,
    trace: TraceWriter | None = None,
    models: dict[str, str] | None = None,
) -> Outline:
    """Expand every leaf level by level to a uniform depth, with no guards.

    An unparseable reply is re-asked once with the identical request; a
    second failure is an error naming the node.
    """
    if not premise.strip():
        raise ValidationError("premise must be non-empty")
    if not 1 <= depth <= 5:
        raise ValidationError(f"depth must be in [1, 5], got {depth}")
    config = config or EngineConfig()
    trace = trace or TraceWriter()

    outline = Outline(premise)
    step = 0
    for _ in range(depth):
        for target in leaves(outline):
            step += 1
            prompt = build_expansion_prompt(outline, target.id)
            reply = gateway.chat(prompt, config.initial_temperature, config.max_tokens)
            try:
                parsed = parse_point_blocks(reply, target.id)
            except FormatError:
                reply = gateway.chat(prompt, config.initial_temperature, config.max_tokens)
                try:
                    parsed = parse_point_blocks(reply, target.id)
                except FormatError as exc:
                    raise FormatError(
                        f"breadth-first expansion of node {target.id or 'premise'!r} "
                        f"failed twice: {exc}"
                    ) from exc
            children = [(p.main_plot, p.characters) for p in parsed[:MAX_CHILDREN]]
            outline = attach_children(outline, target.id, children)
            trace.write({
                "step": step,
                "selected_leaf": target.id,
                "score_table": [],
                "candidates": [plot for plot, _ in children],
                "verdicts": [],
                "temperatures": [config.initial_temperature],
                "attempts": [],
                "outcome": "expanded",
            })

    metadata: dict[str, Any] = {
        "strategy": "breadth-first",
        "depth": depth,
        "expansions": step,
        "models": dict(models or {}),
        "seed": None,
    }
    return with_metadata(outline, metadata)
