"""Pair scorer: a transformer encoder with a single-logit sigmoid head.

The full-scale configuration mirrors a large pretrained encoder; the desk
profile is a small from-scratch encoder with the same interface so the
whole train/serve path runs in seconds on a CPU.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
from torch import nn

from .errors import DataError, ValidationError
from .tokenizer import PAD_ID, HashTokenizer

CONFIG_FILE = "config.json"
WEIGHTS_FILE = "weights.pt"


@dataclass(frozen=True)
class ModelConfig:
    """Encoder shape; defaults are the desk profile."""

    vocab_size: int = 4096
    dim: int = 64
    heads: int = 4
    layers: int = 2
    ffn_dim: int = 128
    max_len: int = 512
    dropout: float = 0.1

    def __post_init__(self) -> None:
        for field in ("vocab_size", "dim", "heads", "layers", "ffn_dim", "max_len"):
            if getattr(self, field) <= 0:
                raise ValidationError(f"{field} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.dim % self.heads:
            raise ValidationError("dim must be divisible by heads")


class PairScorer(nn.Module):
    """Scores an encoded pair with one logit; sigmoid gives p."""

    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.config = config
        self.token_embedding = nn.Embedding(config.vocab_size, config.dim, padding_idx=PAD_ID)
        self.position_embedding = nn.Embedding(config.max_len, config.dim)
        layer = nn.TransformerEncoderLayer(
            d_model=config.dim,
            nhead=config.heads,
            dim_feedforward=config.ffn_dim,
            dropout=config.dropout,
            batch_first=True,
        )
        # The nested-tensor fast path repacks padded batches and can make
        # batched scores drift from single-pair scores; keep the plain path.
        self.encoder = nn.TransformerEncoder(layer, num_layers=config.layers,
                                             enable_nested_tensor=False)
        self.head = nn.Linear(config.dim, 1)

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """Logits for a padded batch; ``mask`` is True on real tokens."""
        positions = torch.arange(ids.shape[1], device=ids.device).unsqueeze(0)
        hidden = self.token_embedding(ids) + self.position_embedding(positions)
        hidden = self.encoder(hidden, src_key_padding_mask=~mask)
        lengths = mask.sum(dim=1, keepdim=True).clamp(min=1)
        pooled = (hidden * mask.unsqueeze(-1)).sum(dim=1) / lengths
        return self.head(pooled).squeeze(-1)


def pad_batch(encoded: list[list[int]]) -> tuple[torch.Tensor, torch.Tensor]:
    """Right-pad id lists into (ids, mask) tensors."""
    if not encoded:
        raise ValidationError("cannot pad an empty batch")
    width = max(len(ids) for ids in encoded)
    ids = torch.full((len(encoded), width), PAD_ID, dtype=torch.long)
    mask = torch.zeros((len(encoded), width), dtype=torch.bool)
    for row, item in enumerate(encoded):
        ids[row, : len(item)] = torch.tensor(item, dtype=torch.long)
        mask[row, : len(item)] = True
    return ids, mask


def save_checkpoint(directory: str | Path, model: PairScorer, model_id: str,
                    extra: dict | None = None) -> None:
    """Write config.json and weights.pt into ``directory``."""
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    doc = {"model_id": model_id, "model": asdict(model.config)}
    if extra:
        doc.update(extra)
    (path / CONFIG_FILE).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    torch.save(model.state_dict(), path / WEIGHTS_FILE)


def load_checkpoint(directory: str | Path) -> tuple[PairScorer, HashTokenizer, str]:
    """Rebuild the model and tokenizer saved by :func:`save_checkpoint`."""
    path = Path(directory)
    try:
        doc = json.loads((path / CONFIG_FILE).read_text(encoding="utf-8"))
        config = ModelConfig(**doc["model"])
        model_id = doc["model_id"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"cannot read checkpoint config in {path}: {exc}") from exc
    model = PairScorer(config)
    try:
        state = torch.load(path / WEIGHTS_FILE, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    except (OSError, RuntimeError, ValueError) as exc:
        raise DataError(f"cannot load checkpoint weights in {path}: {exc}") from exc
    model.eval()
    tokenizer = HashTokenizer(config.vocab_size, config.max_len)
    return model, tokenizer, model_id
