"""Training-pair manufacturing for the concreteness evaluator.

Books listed in a manifest are split into chapters and paragraphs, each
level is summarized by a chat model with level words scrubbed out, and the
summaries are paired per epoch by embedding similarity.  The level order of
a pair fixes its soft label: a (chapter, paragraph) pair labels 1.0 because
the second text is the more concrete one.
"""

from __future__ import annotations

import json
import logging
import math
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

from .errors import FormatError, ValidationError
from .gateway import EmbedBackend, Gateway
from .prompts import SUMMARY_ASSISTANT_PREFIX, build_summarization_prompt
from .textutil import cosine, count_tokens

logger = logging.getLogger(__name__)

LEVELS = ("chapter", "paragraph")

# Context budget for one summarization call, minus the fixed prompt text and
# the reserved completion budget.
MODEL_TOKEN_LIMIT = 4097
PROMPT_OVERHEAD_TOKENS = 512

# Log-scale truncation targets span this token range.
LOG_TARGET_MIN = 25
LOG_TARGET_MAX = 180

_ABBREVIATIONS = {"mr", "mrs", "ms", "dr", "st", "prof", "sr", "jr", "vs", "etc"}
_CLOSERS = "\"'”’)]"
_LEVEL_WORDS = re.compile(r"\b(chapter|paragraph|passage|excerpt|section)s?\b", re.IGNORECASE)

SUMMARY_RETRIES = 3


def _ends_with_abbreviation(prefix: str) -> bool:
    match = re.search(r"([A-Za-z]+)$", prefix)
    return bool(match) and match.group(1).lower() in _ABBREVIATIONS


def split_sentences(text: str) -> list[str]:
    """Split on [.?!] plus closing quotes, skipping known abbreviations.

    Joining the result with single spaces reproduces the input modulo
    inter-sentence whitespace.
    """
    sentences: list[str] = []
    start = 0
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch in ".!?":
            j = i + 1
            while j < n and text[j] in _CLOSERS:
                j += 1
            at_boundary = j >= n or text[j].isspace()
            if at_boundary and not (ch == "." and _ends_with_abbreviation(text[start:i])):
                piece = text[start:j].strip()
                if piece:
                    sentences.append(piece)
                start = j
                i = j
                continue
        i += 1
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


@dataclass(frozen=True)
class Chunk:
    text: str
    over_limit: bool = False


def chunk_text(text: str, token_limit: int, words_per_token: float = 1.0) -> list[Chunk]:
    """Greedily pack whole sentences into chunks under ``token_limit``.

    A single sentence that alone exceeds the limit becomes its own chunk,
    flagged rather than split mid-sentence.
    """
    if token_limit < 1:
        raise ValidationError(f"token_limit must be >= 1, got {token_limit}")
    chunks: list[Chunk] = []
    current: list[str] = []
    current_tokens = 0
    for sentence in split_sentences(text):
        tokens = count_tokens(sentence, words_per_token)
        if tokens > token_limit:
            if current:
                chunks.append(Chunk(" ".join(current)))
                current, current_tokens = [], 0
            chunks.append(Chunk(sentence, over_limit=True))
            continue
        if current and current_tokens + tokens > token_limit:
            chunks.append(Chunk(" ".join(current)))
            current, current_tokens = [], 0
        current.append(sentence)
        current_tokens += tokens
    if current:
        chunks.append(Chunk(" ".join(current)))
    return chunks


def effective_chunk_limit(words_per_token: float = 1.0) -> int:
    return MODEL_TOKEN_LIMIT - PROMPT_OVERHEAD_TOKENS


def scrub_summary(reply: str) -> tuple[str, tuple[str, ...]]:
    """Strip the fixed assistant prefix and flag level words.

    Returns the cleaned text plus the lowercased level words found in it;
    the caller decides whether to retry or drop.
    """
    text = reply.strip()
    if text.startswith(SUMMARY_ASSISTANT_PREFIX):
        text = text[len(SUMMARY_ASSISTANT_PREFIX):].strip()
    found = []
    for match in _LEVEL_WORDS.finditer(text):
        word = match.group(1).lower()
        if word not in found:
            found.append(word)
    return text, tuple(found)


def label_pair(level0: str, level1: str) -> float:
    """Soft label: probability that the second text is the more concrete."""
    for level in (level0, level1):
        if level not in LEVELS:
            raise ValidationError(f"unknown level {level!r}")
    if level0 == level1:
        return 0.5
    return 1.0 if (level0, level1) == ("chapter", "paragraph") else 0.0


@dataclass(frozen=True)
class SummaryRecord:
    """One summarized passage with its provenance."""

    id: str
    level: str
    text: str
    book_id: str
    split: str
    token_count: int
    raw_token_count: int

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "level": self.level,
            "text": self.text,
            "book_id": self.book_id,
            "split": self.split,
            "token_count": self.token_count,
            "raw_token_count": self.raw_token_count,
        }


def write_records(records: Iterable[SummaryRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record.to_json(), ensure_ascii=False) + "\n")


def read_records(path: str | Path) -> list[SummaryRecord]:
    records = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            records.append(SummaryRecord(
                id=doc["id"], level=doc["level"], text=doc["text"], book_id=doc["book_id"],
                split=doc["split"], token_count=doc["token_count"],
                raw_token_count=doc["raw_token_count"],
            ))
        except (ValueError, KeyError) as exc:
            raise FormatError(f"records file {path} line {i + 1} malformed: {exc}") from exc
    return records


@dataclass(frozen=True)
class ManifestBook:
    book_id: str
    path: Path
    split: str
    chapter_break_regex: str


def load_manifest(path: str | Path) -> list[ManifestBook]:
    """Load the corpus manifest: {"books": [{book_id, path, split, chapter_break_regex}]}."""
    manifest_path = Path(path)
    try:
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
        books = [
            ManifestBook(
                book_id=entry["book_id"],
                path=(manifest_path.parent / entry["path"]).resolve(),
                split=entry["split"],
                chapter_break_regex=entry["chapter_break_regex"],
            )
            for entry in doc["books"]
        ]
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"manifest {path} malformed: {exc}") from exc
    seen: dict[str, str] = {}
    for book in books:
        if book.book_id in seen:
            raise ValidationError(f"duplicate book_id {book.book_id!r} in manifest")
        seen[book.book_id] = book.split
    return books


def split_chapters(text: str, chapter_break_regex: str) -> list[str]:
    """Chapter bodies between heading matches; headings and front matter drop."""
    breaks = list(re.finditer(chapter_break_regex, text, re.MULTILINE))
    if not breaks:
        return [text.strip()] if text.strip() else []
    chapters = []
    for i, match in enumerate(breaks):
        start = match.end()
        end = breaks[i + 1].start() if i + 1 < len(breaks) else len(text)
        body = text[start:end].strip()
        if body:
            chapters.append(body)
    return chapters


def split_paragraphs(chapter: str) -> list[str]:
    pieces = re.split(r"\n\s*\n", chapter)
    return [re.sub(r"\s+", " ", piece).strip() for piece in pieces if piece.strip()]


def _summarize_text(gateway: Gateway, raw: str, words_per_token: float,
                    temperature: float, max_tokens: int) -> str | None:
    """Summarize one passage, chunking long input; None when scrubbing fails."""
    parts = []
    for chunk in chunk_text(raw, effective_chunk_limit(words_per_token), words_per_token):
        if chunk.over_limit:
            logger.warning("chunk of %d tokens exceeds the limit; summarizing as-is",
                           count_tokens(chunk.text, words_per_token))
        summary = None
        for _ in range(SUMMARY_RETRIES):
            reply = gateway.chat(build_summarization_prompt(chunk.text), temperature, max_tokens)
            cleaned, violations = scrub_summary(reply)
            if not violations:
                summary = cleaned
                break
            logger.info("summary contains level words %s; retrying", list(violations))
        if summary is None:
            return None
        parts.append(summary)
    return " ".join(parts) if parts else None


def summarize_corpus(
    manifest: Sequence[ManifestBook],
    gateway: Gateway,
    words_per_token: float = 1.0,
    temperature: float = 0.0,
    max_tokens: int = 512,
) -> list[SummaryRecord]:
    """Produce chapter- and paragraph-level summary records for a corpus.

    Summaries that still contain level words after the retry budget are
    dropped with a log line rather than kept dirty.
    """
    records: list[SummaryRecord] = []
    for book in manifest:
        text = book.path.read_text(encoding="utf-8")
        chapters = split_chapters(text, book.chapter_break_regex)
        for c_index, chapter in enumerate(chapters, start=1):
            flat_chapter = re.sub(r"\s+", " ", chapter).strip()
            summary = _summarize_text(gateway, flat_chapter, words_per_token,
                                      temperature, max_tokens)
            if summary is None:
                logger.warning("dropping chapter %s:%d after scrub retries", book.book_id, c_index)
            else:
                records.append(SummaryRecord(
                    id=f"{book.book_id}:chapter:{c_index}", level="chapter", text=summary,
                    book_id=book.book_id, split=book.split,
                    token_count=count_tokens(summary, words_per_token),
                    raw_token_count=count_tokens(flat_chapter, words_per_token),
                ))
            for p_index, paragraph in enumerate(split_paragraphs(chapter), start=1):
                summary = _summarize_text(gateway, paragraph, words_per_token,
                                          temperature, max_tokens)
                if summary is None:
                    logger.warning("dropping paragraph %s:%d.%d after scrub retries",
                                   book.book_id, c_index, p_index)
                    continue
                records.append(SummaryRecord(
                    id=f"{book.book_id}:paragraph:{c_index}.{p_index}", level="paragraph",
                    text=summary, book_id=book.book_id, split=book.split,
                    token_count=count_tokens(summary, words_per_token),
                    raw_token_count=count_tokens(paragraph, words_per_token),
                ))
    return records


def truncate_to_token_limit(text: str, limit: int, words_per_token: float = 1.0) -> str:
    """Largest whole-sentence prefix within ``limit`` tokens, at least one sentence."""
    sentences = split_sentences(text)
    if not sentences:
        return text
    kept = [sentences[0]]
    total = count_tokens(sentences[0], words_per_token)
    for sentence in sentences[1:]:
        tokens = count_tokens(sentence, words_per_token)
        if total + tokens > limit:
            break
        kept.append(sentence)
        total += tokens
    return " ".join(kept)


def draw_log_target(rng: random.Random) -> int:
    """Token target drawn log-uniformly from [25, 180]."""
    return round(math.exp(rng.uniform(math.log(LOG_TARGET_MIN), math.log(LOG_TARGET_MAX))))


def truncate_pair(t0: str, t1: str, rng: random.Random,
                  words_per_token: float = 1.0) -> tuple[str, str]:
    """Length-debias a pair before training.

    Half the time the longer text is cut to the shorter one's token count;
    otherwise both are cut to a shared log-uniform target.  Cuts always land
    on sentence boundaries and keep at least one sentence.
    """
    if rng.random() < 0.5:
        tokens0 = count_tokens(t0, words_per_token)
        tokens1 = count_tokens(t1, words_per_token)
        if tokens0 == tokens1:
            return t0, t1
        if tokens0 > tokens1:
            return truncate_to_token_limit(t0, tokens1, words_per_token), t1
        return t0, truncate_to_token_limit(t1, tokens0, words_per_token)
    target = draw_log_target(rng)
    return (
        truncate_to_token_limit(t0, target, words_per_token),
        truncate_to_token_limit(t1, target, words_per_token),
    )


@dataclass(frozen=True)
class TrainingPair:
    t0_id: str
    t1_id: str
    t0: str
    t1: str
    label: float


def pair_epoch(
    records: Sequence[SummaryRecord],
    n_pairs: int,
    rng: random.Random,
    history: set[frozenset[str]],
    embed_backend: EmbedBackend,
    embedding_cache: dict[str, list[float]] | None = None,
) -> list[TrainingPair]:
    """Greedily pair summaries by embedding similarity for one epoch.

    Each record is used at most once per epoch and an unordered pair never
    repeats across epochs; ``history`` is updated in place.  Exhaustion
    returns a shorter list with a warning.
    """
    cache = embedding_cache if embedding_cache is not None else {}
    for record in records:
        if record.id not in cache:
            cache[record.id] = embed_backend.embed(record.text)
    shuffled = list(records)
    rng.shuffle(shuffled)
    used: set[str] = set()
    pairs: list[TrainingPair] = []
    for record in shuffled:
        if len(pairs) >= n_pairs:
            break
        if record.id in used:
            continue
        best = None
        best_score = -math.inf
        for other in shuffled:
            if other.id == record.id or other.id in used:
                continue
            if frozenset((record.id, other.id)) in history:
                continue
            score = cosine(cache[record.id], cache[other.id])
            if score > best_score:
                best, best_score = other, score
        if best is None:
            continue
        used.update((record.id, best.id))
        history.add(frozenset((record.id, best.id)))
        pairs.append(TrainingPair(record.id, best.id, record.text, best.text,
                                  label_pair(record.level, best.level)))
    if len(pairs) < n_pairs:
        logger.warning("pairing exhausted after %d of %d requested pairs", len(pairs), n_pairs)
    return pairs


def build_training_pairs(
    records: Sequence[SummaryRecord],
    epochs: int,
    pairs_per_epoch: int,
    seed: int,
    embed_backend: EmbedBackend,
    words_per_token: float = 1.0,
) -> list[dict[str, Any]]:
    """Pair and truncate summaries for ``epochs`` epochs of training rows."""
    rng = random.Random(seed)
    history: set[frozenset[str]] = set()
    cache: dict[str, list[float]] = {}
    rows = []
    for _ in range(epochs):
        for pair in pair_epoch(records, pairs_per_epoch, rng, history, embed_backend, cache):
            t0, t1 = truncate_pair(pair.t0, pair.t1, rng, words_per_token)
            rows.append({"t0": t0, "t1": t1, "label": pair.label})
    return rows


def write_pairs(rows: Iterable[dict[str, Any]], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")


def dataset_stats(records: Sequence[SummaryRecord]) -> dict[str, dict[str, float]]:
    """Per split and level: record count, mean summary and raw tokens, ratio."""
    grouped: dict[str, list[SummaryRecord]] = {}
    for record in records:
        grouped.setdefault(f"{record.split}/{record.level}", []).append(record)
    stats = {}
    for key in sorted(grouped):
        group = grouped[key]
        mean_summary = sum(r.token_count for r in group) / len(group)
        mean_raw = sum(r.raw_token_count for r in group) / len(group)
        stats[key] = {
            "count": len(group),
            "mean_summary_tokens": mean_summary,
            "mean_raw_tokens": mean_raw,
            "raw_to_summary_ratio": mean_raw / mean_summary if mean_summary else 0.0,
        }
    return stats
