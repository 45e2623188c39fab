"""Rendering an outline into story passages and sampling excerpts.

Each leaf becomes one passage, written with a rolling window of up to five
prior (point, passage) pairs for continuity.  Word counts are soft-checked
only: a passage far outside the requested length logs a warning but is
kept, since length enforcement belongs to the prompt, not the renderer.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from typing import Sequence

from .errors import BackendError, ValidationError
from .gateway import Gateway
from .outline import Outline, leaves
from .prompts import build_story_prompt
from .textutil import count_tokens, count_words

logger = logging.getLogger(__name__)

DEFAULT_WORDS_PER_PASSAGE = 75
DEFAULT_WINDOW = 5
# Soft acceptance bounds as multiples of the requested passage length.
LENGTH_LOW = 0.5
LENGTH_HIGH = 2.0

DEFAULT_WORDS_PER_TOKEN = 0.75


@dataclass(frozen=True)
class Passage:
    leaf_id: str
    point: str
    text: str


def render_story(
    outline: Outline,
    gateway: Gateway,
    words_per_passage: int = DEFAULT_WORDS_PER_PASSAGE,
    window_size: int = DEFAULT_WINDOW,
    temperature: float = 0.7,
    max_tokens: int = 512,
) -> list[Passage]:
    """Write one passage per leaf in depth-first order.

    An empty reply is re-asked once with the identical request; a second
    empty reply is an error naming the leaf.
    """
    if words_per_passage < 1:
        raise ValidationError(f"words_per_passage must be >= 1, got {words_per_passage}")
    if window_size < 0:
        raise ValidationError(f"window_size must be >= 0, got {window_size}")
    outline_leaves = leaves(outline)
    if not outline.roots:
        raise ValidationError("cannot render a story from an unexpanded outline")
    passages: list[Passage] = []
    for index, leaf in enumerate(outline_leaves):
        window = [(p.point, p.text) for p in passages[-window_size:]] if window_size else []
        prompt = build_story_prompt(outline.premise, window, leaf.main_plot,
                                    words_per_passage, final=index == len(outline_leaves) - 1)
        text = gateway.chat(prompt, temperature, max_tokens).strip()
        if not text:
            text = gateway.chat(prompt, temperature, max_tokens).strip()
            if not text:
                raise BackendError(f"empty passage for leaf {leaf.id!r} after one re-ask")
        words = count_words(text)
        if not LENGTH_LOW * words_per_passage <= words <= LENGTH_HIGH * words_per_passage:
            logger.warning("passage for leaf %s is %d words, outside [%d, %d]",
                           leaf.id, words, int(LENGTH_LOW * words_per_passage),
                           int(LENGTH_HIGH * words_per_passage))
        passages.append(Passage(leaf.id, leaf.main_plot, text))
    return passages


def story_text(passages: Sequence[Passage]) -> str:
    return "\n\n".join(p.text for p in passages)


def excerpt(
    passages: Sequence[Passage],
    target_tokens: int = 1000,
    rng: random.Random | None = None,
    words_per_token: float = DEFAULT_WORDS_PER_TOKEN,
) -> list[Passage]:
    """A seeded contiguous run of passages close to a token target.

    The run starts at a random offset among starts that can still reach the
    target, grows until crossing it, and keeps the last passage only when
    that lands nearer the target, so the total never exceeds the target by
    more than one passage.
    """
    if target_tokens < 1:
        raise ValidationError(f"target_tokens must be >= 1, got {target_tokens}")
    if not passages:
        return []
    sizes = [count_tokens(p.text, words_per_token) for p in passages]
    if sum(sizes) <= target_tokens:
        return list(passages)
    if rng is None:
        raise ValidationError("rng is required when the story exceeds the target")

    suffix_total = 0
    max_start = 0
    for start in range(len(passages) - 1, -1, -1):
        suffix_total += sizes[start]
        if suffix_total >= target_tokens:
            max_start = start
            break
    start = rng.randrange(max_start + 1)

    total = 0
    end = start
    while end < len(passages) and total < target_tokens:
        total += sizes[end]
        end += 1
    if end - start > 1 and abs(total - target_tokens) > abs(total - sizes[end - 1] - target_tokens):
        end -= 1
    return list(passages[start:end])
