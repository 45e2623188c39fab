"""Command-line interface: train a checkpoint, then serve it.

Exit codes: 0 success, 2 bad settings or inputs, 3 training failure.
"""

from __future__ import annotations

import functools
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable

import click
import uvicorn

from .data import read_pairs
from .errors import DataError, TrainError, ValidationError
from .model import ModelConfig, save_checkpoint
from .serve import create_app
from .train import DESK_MODEL, DESK_TRAINER, TrainerConfig, train

EXIT_CONFIG = 2
EXIT_TRAIN = 3


def _exit_codes(fn: Callable[..., Any]) -> Callable[..., Any]:
    @functools.wraps(fn)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return fn(*args, **kwargs)
        except (ValidationError, DataError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except TrainError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_TRAIN)

    return wrapper


@click.group()
def main() -> None:
    """Concreteness model trainer and compare service."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")


@main.command("train")
@click.option("--pairs", "pairs_path", type=click.Path(), required=True,
              help="Training pairs JSONL: {t0, t1, label} rows.")
@click.option("--out", "out_dir", type=click.Path(), required=True,
              help="Checkpoint directory to write.")
@click.option("--eval-pairs", "eval_path", type=click.Path(), default=None,
              help="Held-out pairs JSONL for the per-epoch metric log.")
@click.option("--profile", type=click.Choice(["desk", "full"]), default="desk",
              show_default=True, help="desk trains the small encoder; full uses the "
              "large-encoder hyperparameters.")
@click.option("--epochs", type=int, default=None, help="Override the profile's epoch count.")
@click.option("--learning-rate", type=float, default=None,
              help="Override the profile's learning rate.")
@click.option("--seed", type=int, default=0, show_default=True, help="Training seed.")
@click.option("--model-id", default="concreteness-pair-scorer", show_default=True,
              help="Identifier reported by /healthz.")
@_exit_codes
def train_command(pairs_path: str, out_dir: str, eval_path: str | None, profile: str,
                  epochs: int | None, learning_rate: float | None, seed: int,
                  model_id: str) -> None:
    """Fine-tune the pair scorer and write a checkpoint directory."""
    pairs = read_pairs(pairs_path)
    eval_pairs = read_pairs(eval_path) if eval_path else None
    trainer = DESK_TRAINER if profile == "desk" else TrainerConfig()
    model_config = DESK_MODEL if profile == "desk" else ModelConfig(
        vocab_size=50265, dim=1024, heads=16, layers=24, ffn_dim=4096)
    overrides: dict[str, Any] = {}
    if epochs is not None:
        overrides["epochs"] = epochs
    if learning_rate is not None:
        overrides["learning_rate"] = learning_rate
    if overrides:
        trainer = TrainerConfig(**{**trainer.__dict__, **overrides})
    result = train(pairs, trainer, model_config, seed=seed, eval_pairs=eval_pairs)
    save_checkpoint(out_dir, result.model, model_id,
                    extra={"seed": seed, "epochs": trainer.epochs})
    (Path(out_dir) / "history.json").write_text(
        json.dumps(result.history, indent=2) + "\n", encoding="utf-8")
    final = result.history[-1]
    click.echo(f"wrote checkpoint to {out_dir} "
               f"(accuracy {final['accuracy']:.3f}, loss {final['loss']:.4f})", err=True)


@main.command("serve")
@click.option("--checkpoint", "checkpoint_dir", type=click.Path(), required=True,
              help="Checkpoint directory from `train`.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8100, show_default=True)
@_exit_codes
def serve_command(checkpoint_dir: str, host: str, port: int) -> None:
    """Serve /compare and /compare_batch for a checkpoint."""
    app = create_app(checkpoint_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
