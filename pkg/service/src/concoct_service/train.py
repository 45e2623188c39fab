"""Training loop: BCE on soft targets with a per-epoch metric log.

The default hyperparameters are the full-scale recipe for a large
pretrained encoder.  ``DESK_TRAINER`` is the profile actually exercised in
tests: the same loop and schedule on the small from-scratch encoder, with
a learning rate scaled up to what training from random init needs.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, replace
from typing import Sequence

import torch
from torch import nn

from .data import Pair
from .errors import TrainError, ValidationError
from .model import ModelConfig, PairScorer, pad_batch
from .tokenizer import HashTokenizer

logger = logging.getLogger(__name__)

NEUTRAL_BAND = 0.1
CLAMP = 1e-7


@dataclass(frozen=True)
class TrainerConfig:
    """Optimization settings; defaults are the full-scale recipe."""

    max_seq_len: int = 512
    train_batch: int = 8
    eval_batch: int = 16
    learning_rate: float = 6e-6
    weight_decay: float = 0.0
    adam_epsilon: float = 1e-8
    max_grad_norm: float = 1.0
    epochs: int = 28
    pairs_per_epoch: int = 1000

    def __post_init__(self) -> None:
        for field in ("max_seq_len", "train_batch", "eval_batch", "learning_rate",
                      "adam_epsilon", "max_grad_norm", "epochs", "pairs_per_epoch"):
            if getattr(self, field) <= 0:
                raise ValidationError(f"{field} must be positive")
        if self.weight_decay < 0:
            raise ValidationError("weight_decay must be >= 0")


DESK_TRAINER = TrainerConfig(learning_rate=1e-3)
DESK_MODEL = ModelConfig()


def discretize(p: float, band: float = NEUTRAL_BAND) -> float:
    if abs(p - 0.5) <= band:
        return 0.5
    return 1.0 if p > 0.5 else 0.0


def bce(p: float, label: float) -> float:
    clamped = min(max(p, CLAMP), 1 - CLAMP)
    return -(label * math.log(clamped) + (1 - label) * math.log(1 - clamped))


def metric_suite(probabilities: Sequence[float], labels: Sequence[float],
                 band: float = NEUTRAL_BAND) -> dict[str, float]:
    """The seven comparator metrics over raw probabilities and soft labels."""
    if not probabilities or len(probabilities) != len(labels):
        raise ValidationError("probabilities and labels must be equal-length and non-empty")
    n = len(probabilities)
    calls = [discretize(p, band) for p in probabilities]
    accuracy = sum(1 for c, label in zip(calls, labels) if c == label) / n
    loss = sum(bce(p, label) for p, label in zip(probabilities, labels)) / n
    neutral = sum(1 for c in calls if c == 0.5) / n
    false_neutral = sum(1 for c, label in zip(calls, labels)
                        if c == 0.5 and label != 0.5) / n
    true_partial = sum(1 for c, label in zip(calls, labels)
                       if c != 0.5 and label != 0.5 and c == label) / n
    major_false = sum(1 for c, label in zip(calls, labels)
                      if c != 0.5 and label != 0.5 and c != label) / n
    return {
        "accuracy": accuracy,
        "loss": loss,
        "neutral": neutral,
        "partial": 1.0 - neutral,
        "false_neutral": false_neutral,
        "true_partial": true_partial,
        "major_false": major_false,
    }


@dataclass
class TrainResult:
    model: PairScorer
    tokenizer: HashTokenizer
    history: list[dict[str, float]]


def _epoch_stream(pairs: Sequence[Pair], config: TrainerConfig, rng: random.Random,
                  seen: set[frozenset[str]]) -> list[Pair]:
    """One epoch of pairs honoring the no-repeat rules.

    When the pool exceeds the per-epoch budget, draws avoid any unordered
    text pair already used in a previous epoch; exhaustion yields a shorter
    epoch with a warning.  A pool within budget is replayed in full.
    """
    if len(pairs) <= config.pairs_per_epoch:
        epoch = list(pairs)
        rng.shuffle(epoch)
        return epoch
    shuffled = list(pairs)
    rng.shuffle(shuffled)
    epoch = []
    for pair in shuffled:
        if len(epoch) >= config.pairs_per_epoch:
            break
        key = frozenset((pair.t0, pair.t1))
        if key in seen:
            continue
        seen.add(key)
        epoch.append(pair)
    if len(epoch) < config.pairs_per_epoch:
        logger.warning("pair pool exhausted: epoch has %d of %d pairs",
                       len(epoch), config.pairs_per_epoch)
    return epoch


def train(
    pairs: Sequence[Pair],
    trainer: TrainerConfig = DESK_TRAINER,
    model_config: ModelConfig = DESK_MODEL,
    seed: int = 0,
    eval_pairs: Sequence[Pair] | None = None,
) -> TrainResult:
    """Train a pair scorer; the history holds one metric row per epoch.

    The eval set defaults to the training pairs themselves, which is only
    meaningful for smoke-scale runs.  A non-finite loss aborts.
    """
    if not pairs:
        raise ValidationError("cannot train on an empty pair list")
    if model_config.max_len != trainer.max_seq_len:
        model_config = replace(model_config, max_len=trainer.max_seq_len)
    torch.manual_seed(seed)
    rng = random.Random(seed)
    tokenizer = HashTokenizer(model_config.vocab_size, model_config.max_len)
    model = PairScorer(model_config)
    optimizer = torch.optim.AdamW(model.parameters(), lr=trainer.learning_rate,
                                  weight_decay=trainer.weight_decay,
                                  eps=trainer.adam_epsilon)
    loss_fn = nn.BCEWithLogitsLoss()
    held_out = list(eval_pairs) if eval_pairs is not None else list(pairs)
    encoded = {(p.t0, p.t1): tokenizer.encode_pair(p.t0, p.t1).ids for p in pairs}
    for pair in held_out:
        encoded.setdefault((pair.t0, pair.t1),
                           tokenizer.encode_pair(pair.t0, pair.t1).ids)
    seen: set[frozenset[str]] = set()
    history: list[dict[str, float]] = []
    for epoch in range(1, trainer.epochs + 1):
        epoch_pairs = _epoch_stream(pairs, trainer, rng, seen)
        model.train()
        total_loss = 0.0
        for start in range(0, len(epoch_pairs), trainer.train_batch):
            batch = epoch_pairs[start : start + trainer.train_batch]
            ids, mask = pad_batch([encoded[(p.t0, p.t1)] for p in batch])
            labels = torch.tensor([p.label for p in batch], dtype=torch.float32)
            optimizer.zero_grad()
            logits = model(ids, mask)
            loss = loss_fn(logits, labels)
            if not torch.isfinite(loss):
                raise TrainError(f"non-finite loss at epoch {epoch}")
            loss.backward()
            nn.utils.clip_grad_norm_(model.parameters(), trainer.max_grad_norm)
            optimizer.step()
            total_loss += loss.item() * len(batch)
        row = {"epoch": float(epoch), "train_loss": total_loss / len(epoch_pairs)}
        row.update(evaluate(model, tokenizer, held_out, trainer.eval_batch))
        history.append(row)
        logger.info("epoch %d: train_loss %.4f accuracy %.3f",
                    epoch, row["train_loss"], row["accuracy"])
    model.eval()
    return TrainResult(model, tokenizer, history)


def evaluate(model: PairScorer, tokenizer: HashTokenizer, pairs: Sequence[Pair],
             batch_size: int = 16) -> dict[str, float]:
    """Metric suite for ``pairs`` under the current weights."""
    if not pairs:
        raise ValidationError("cannot evaluate on an empty pair list")
    model.eval()
    probabilities = []
    with torch.no_grad():
        for start in range(0, len(pairs), batch_size):
            batch = pairs[start : start + batch_size]
            ids, mask = pad_batch([tokenizer.encode_pair(p.t0, p.t1).ids for p in batch])
            probabilities.extend(torch.sigmoid(model(ids, mask)).tolist())
    return metric_suite(probabilities, [p.label for p in pairs])
