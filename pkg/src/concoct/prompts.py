"""Prompt builders and reply parsing for outline work.

Template wording is frozen; tests pin the exact strings.  The reply parser
is deliberately tolerant about spacing ("Point 6.1", "Point6.1", stray blank
lines) but strict about substance: indices must sit directly under the
requested parent, duplicates and leftover placeholder markers are errors,
and at most eight children are accepted.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from .errors import FormatError
from .outline import Outline, OutlineNode, PREMISE_ID, child_id, iter_nodes

logger = logging.getLogger(__name__)

Message = dict[str, str]

MAX_CHILDREN = 8

EXPANSION_QUESTION = (
    "Can you break down {what} into some independent, chronological and "
    "same-scaled outline points? Also, assign each character a name. Please "
    'use the following template with "Main Plot" and "Characters". Do not '
    "answer anything else."
)

REWRITE_TASK = (
    'Task: Fill in the "[INSERT]" in the Outline. Do not change any other '
    'parts except "[INSERT]".'
)

SUMMARY_ASSISTANT_PREFIX = "Summary: In this paragraph, the main story is as follows."

PAIRWISE_JUDGE_TEMPLATE = (
    "Please judge which of the two passages below is written in a more "
    "detailed style. Make sure to judge not based on the length of the "
    "passage and the order of input, but only by the style of descriptions. "
    "\n\n\n\n Passage (A): {p0}\n\n\n\n Passage (B): {p1}\n\n\n\n Which "
    "passage is written in a more low-level-detailed style? Please answer "
    '"Passage (A)" or "Passage (B)." '
)

_PAIR_JUDGE_QUESTIONS = (
    "1. Overall, which {unit} has more consistent pacing (i.e., which is "
    "more consistent in its level of detail)? "
    "2. Overall, which {unit} has a more coherent overarching plot? "
    "3. Overall, which {unit}'s plot is closer to the premise? "
    "4. Overall, which {unit} do you prefer / find more interesting? "
    "Please answer with a string of four letters (A or B)."
)

STORY_PAIR_JUDGE_TEMPLATE = (
    "Here are two story excerpts.\n\n\n\n The shown stories are parts of "
    "whole stories. You shouldn't be concerned about the completeness of "
    "the plot. \nPremise (both excerpts continue it): {premise}\n\n"
    "Story A:\n\n {a} \n\n\n\n Story B:\n\n {b} \n\n\n\n "
    "Answer the following question: " + _PAIR_JUDGE_QUESTIONS.format(unit="story")
)

OUTLINE_PAIR_JUDGE_TEMPLATE = (
    "Here are two story outlines.\n\n\n\n The shown outlines are plans for "
    "whole stories. \nPremise (both outlines follow it): {premise}\n\n"
    "Outline A:\n\n {a} \n\n\n\n Outline B:\n\n {b} \n\n\n\n "
    "Answer the following question: " + _PAIR_JUDGE_QUESTIONS.format(unit="outline")
)

_POINT_HEADER = re.compile(r"(?im)^[ \t]*Point\s*(\d+(?:\.\d+)*)\s*[.:]?[ \t]*$")
_MAIN_PLOT_LINE = re.compile(r"(?im)^[ \t]*Main[ \t]+plot[ \t]*:[ \t]*(.*)$")
_CHARACTERS_LINE = re.compile(r"(?im)^[ \t]*Characters[ \t]*:[ \t]*(.*)$")
_TRAILING_PARENTHETICAL = re.compile(r"\s*\([^()]*\)\s*$")


@dataclass(frozen=True)
class ParsedPoint:
    """One child point parsed from a reply: slot position, plot, characters."""

    position: int
    main_plot: str
    characters: tuple[str, ...]


def _format_node(node: OutlineNode) -> str:
    chars = ", ".join(node.characters)
    return f"Point {node.id}\nMain plot: {node.main_plot}\nCharacters: {chars}"


def _context_nodes(outline: Outline, target_id: str) -> list[OutlineNode]:
    """Ancestor context: each ancestor of the target with its full child list.

    A node is shown when its parent is the root or an ancestor of the target,
    which yields depth-first order with every sibling level along the path.
    """
    shown_parents = {PREMISE_ID}
    segments = target_id.split(".")
    for cut in range(1, len(segments)):
        shown_parents.add(".".join(segments[:cut]))
    picked = []
    for node in iter_nodes(outline):
        parent = node.id.rsplit(".", 1)[0] if "." in node.id else PREMISE_ID
        if parent in shown_parents:
            picked.append(node)
    return picked


def _expansion_header(outline: Outline, target_id: str) -> list[str]:
    parts = [f"Premise: {outline.premise}"]
    context = _context_nodes(outline, target_id) if target_id != PREMISE_ID else []
    if context:
        parts.append("Outline:")
        parts.extend(_format_node(node) for node in context)
    what = "the premise" if target_id == PREMISE_ID else f"point {target_id}"
    parts.append(EXPANSION_QUESTION.format(what=what))
    return parts


def build_expansion_prompt(outline: Outline, target_id: str) -> list[Message]:
    """Prompt asking to break the target into child points.

    Two explicit template slots plus a trailing "..." let the model pick how
    many children to emit; the parser caps acceptance at eight.
    """
    parts = _expansion_header(outline, target_id)
    for slot in (1, 2):
        slot_id = child_id(target_id, slot)
        parts.append(f"Point {slot_id}\nMain plot: [TODO]\nCharacters: [TODO]")
    parts.append("...")
    return [{"role": "user", "content": "\n\n".join(parts)}]


def build_rewrite_prompt(
    outline: Outline,
    target_id: str,
    candidates: list[ParsedPoint],
    failed_slots: set[int],
) -> list[Message]:
    """Prompt asking to fill fresh text for the failed candidate slots.

    Passing candidates appear verbatim; failed slots are masked with
    "[INSERT]" so only they may change.
    """
    if not failed_slots:
        raise ValueError("rewrite prompt needs at least one failed slot")
    parts = _expansion_header(outline, target_id)
    parent = outline.premise_node if target_id == PREMISE_ID else None
    if parent is None:
        for node in iter_nodes(outline):
            if node.id == target_id:
                parent = node
                break
    if parent is None:
        raise ValueError(f"no node with id {target_id!r}")
    if target_id == PREMISE_ID:
        parts.append(f"Output: Premise: {outline.premise}")
    else:
        parts.append("Output: " + _format_node(parent))
    for candidate in candidates:
        slot_id = child_id(target_id, candidate.position)
        if candidate.position in failed_slots:
            parts.append(f"Point {slot_id}\nMain plot: [INSERT]\nCharacters: [INSERT]")
        else:
            chars = ", ".join(candidate.characters)
            parts.append(f"Point {slot_id}\nMain plot: {candidate.main_plot}\nCharacters: {chars}")
    parts.append(REWRITE_TASK)
    return [{"role": "user", "content": "\n\n".join(parts)}]


def parse_characters(text: str) -> tuple[str, ...]:
    """Split a characters line on commas and "and", trimming parentheticals."""
    pieces = re.split(r",|\s+\band\b\s+", text)
    names = []
    for piece in pieces:
        name = _TRAILING_PARENTHETICAL.sub("", piece.strip()).strip()
        if name:
            names.append(name)
    return tuple(names)


def parse_point_blocks(reply: str, parent_id: str) -> list[ParsedPoint]:
    """Parse child points for ``parent_id`` out of a model reply.

    Raises FormatError on zero points, duplicate indices, indices that do not
    sit directly under the parent, or leftover [TODO]/[INSERT] markers.  An
    echo of the parent's own block is tolerated and skipped.
    """
    headers = list(_POINT_HEADER.finditer(reply))
    if not headers:
        raise FormatError("no outline points found in reply")
    points: list[ParsedPoint] = []
    seen: set[int] = set()
    for i, header in enumerate(headers):
        index = header.group(1)
        block_end = headers[i + 1].start() if i + 1 < len(headers) else len(reply)
        block = reply[header.end() : block_end]
        if index == parent_id:
            continue
        position = _child_position(index, parent_id)
        plot_match = _MAIN_PLOT_LINE.search(block)
        if plot_match is None:
            raise FormatError(f"point {index} has no main plot line")
        main_plot = plot_match.group(1).strip()
        chars_match = _CHARACTERS_LINE.search(block)
        characters_text = chars_match.group(1).strip() if chars_match else ""
        for marker in ("[TODO]", "[INSERT]"):
            if marker in main_plot or marker in characters_text:
                raise FormatError(f"point {index} still contains {marker}")
        if not main_plot:
            raise FormatError(f"point {index} has an empty main plot")
        if position in seen:
            raise FormatError(f"duplicate point index {index}")
        seen.add(position)
        points.append(ParsedPoint(position, main_plot, parse_characters(characters_text)))
    if not points:
        raise FormatError("no outline points found in reply")
    points.sort(key=lambda p: p.position)
    if len(points) > MAX_CHILDREN:
        logger.info("keeping first %d of %d parsed children", MAX_CHILDREN, len(points))
        points = points[:MAX_CHILDREN]
    return points


def _child_position(index: str, parent_id: str) -> int:
    if parent_id == PREMISE_ID:
        head, _, tail = index.rpartition(".")
        if head:
            raise FormatError(f"point index {index} is not a top-level point")
        return int(tail)
    prefix = parent_id + "."
    if not index.startswith(prefix) or "." in index[len(prefix):]:
        raise FormatError(f"point index {index} is not a child of point {parent_id}")
    return int(index[len(prefix):])


def build_summarization_prompt(passage: str) -> list[Message]:
    """Three-message summary prompt with a fixed assistant prefix."""
    return [
        {"role": "user", "content": "Write a summary for the paragraph.\n\n"},
        {"role": "user", "content": f"Paragraph: {passage}"},
        {"role": "assistant", "content": SUMMARY_ASSISTANT_PREFIX},
    ]


def build_pairwise_judge_prompt(p0: str, p1: str) -> list[Message]:
    """Prompt asking which of two passages is more detailed in style."""
    return [{"role": "user", "content": PAIRWISE_JUDGE_TEMPLATE.format(p0=p0, p1=p1)}]


def parse_pairwise_judge_reply(reply: str) -> float:
    """Map a judge reply onto {0.0, 0.5, 1.0}.

    "Passage (A)" means the first passage is more concrete (0.0), "Passage
    (B)" the second (1.0); anything ambiguous scores 0.5 with a warning.
    """
    lowered = reply.lower()
    saw_a = "passage (a)" in lowered
    saw_b = "passage (b)" in lowered
    if saw_a and not saw_b:
        return 0.0
    if saw_b and not saw_a:
        return 1.0
    logger.warning("unparseable judge reply treated as a tie: %r", reply[:80])
    return 0.5


def build_story_pair_judge_prompt(premise: str, story_a: str, story_b: str) -> list[Message]:
    """Four-question A/B prompt over two story excerpts."""
    content = STORY_PAIR_JUDGE_TEMPLATE.format(premise=premise, a=story_a, b=story_b)
    return [{"role": "user", "content": content}]


def build_outline_pair_judge_prompt(premise: str, outline_a: str, outline_b: str) -> list[Message]:
    """Four-question A/B prompt over two flattened outlines."""
    content = OUTLINE_PAIR_JUDGE_TEMPLATE.format(premise=premise, a=outline_a, b=outline_b)
    return [{"role": "user", "content": content}]


def parse_four_letter_reply(reply: str) -> list[str]:
    """Parse a strict four-letter A/B verdict string, e.g. "ABBA"."""
    cleaned = re.sub(r"[^ABab]", "", reply)
    if len(cleaned) != 4:
        raise FormatError(f"expected exactly four A/B letters, got {reply!r}")
    return list(cleaned.upper())


def build_story_prompt(
    premise: str,
    window: list[tuple[str, str]],
    target_point: str,
    words_per_passage: int,
    final: bool = False,
) -> list[Message]:
    """Prompt for the next story passage.

    ``window`` holds up to five prior (outline point, passage) pairs; the
    first leaf passes an empty window so the prompt carries only the premise.
    """
    parts = [
        "You are writing a story one passage at a time.",
        f"Premise: {premise}",
    ]
    for point, passage in window:
        parts.append(f"Outline point: {point}\nPassage: {passage}")
    parts.append(f"Next outline point: {target_point}")
    closing = (
        "This is the final outline point, so bring the story to a close."
        if final
        else "Do not conclude the story."
    )
    parts.append(
        f"Write the next passage of the story, covering only this outline "
        f"point, in about {words_per_passage} words. {closing} Answer with "
        f"the passage text only."
    )
    return [{"role": "user", "content": "\n\n".join(parts)}]
