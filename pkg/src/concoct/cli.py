"""Command-line interface.

Settings resolve as flags over config-file values over built-in defaults;
every default is visible in --help.  Exit codes: 0 success, 2 bad settings
or inputs, 3 backend failure, 4 format failure.
"""

from __future__ import annotations

import functools
import json
import logging
import random
import sys
from pathlib import Path
from typing import Any, Callable

import click

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import dataset as dataset_mod
from . import metrics as metrics_mod
from .engine import EngineConfig, TraceWriter, run_breadth_first, run_vaguest_first
from .errors import BackendError, ConfigError, FormatError, ValidationError
from .evaluator import CachingEvaluator, HttpEvaluator, JudgeEvaluator, ScriptedEvaluator
from .gateway import (
    Cassette,
    Gateway,
    HttpChatBackend,
    HttpEmbedBackend,
    RecordingChatBackend,
    RecordingEmbedBackend,
    ReplayChatBackend,
    ReplayEmbedBackend,
)
from .outline import deserialize, flatten_leaves, serialize
from .story import excerpt as story_excerpt
from .story import render_story, story_text

EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_FORMAT = 4

logger = logging.getLogger(__name__)


def _exit_codes(fn: Callable[..., Any]) -> Callable[..., Any]:
    @functools.wraps(fn)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return fn(*args, **kwargs)
        except (ConfigError, ValidationError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except FormatError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_FORMAT)
        except BackendError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_BACKEND)

    return wrapper


def _load_config(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc


def _resolve(flag: Any, config: dict[str, Any], key: str, default: Any) -> Any:
    if flag is not None:
        return flag
    if key in config:
        return config[key]
    return default


def _build_gateway(
    cassette_path: str | None,
    cassette_mode: str,
    llm_base_url: str | None,
    embed_base_url: str | None,
    api_key: str,
    chat_model: str,
    embed_model: str,
) -> tuple[Gateway, dict[str, str]]:
    """Assemble chat and embedding backends per the cassette mode."""
    if cassette_mode == "replay":
        if not cassette_path:
            raise ConfigError("--cassette is required in replay mode")
        cassette = Cassette(cassette_path)
        gateway = Gateway(ReplayChatBackend(cassette), ReplayEmbedBackend(cassette))
        return gateway, {"chat": "replay", "embed": "replay"}
    if not llm_base_url:
        raise ConfigError("--llm-base-url (or LLM_BASE_URL) is required without replay")
    chat = HttpChatBackend(llm_base_url, api_key, chat_model)
    embed = HttpEmbedBackend(embed_base_url or llm_base_url, api_key, embed_model)
    if cassette_mode == "record":
        if not cassette_path:
            raise ConfigError("--cassette is required in record mode")
        cassette = Cassette(cassette_path)
        return (
            Gateway(RecordingChatBackend(chat, cassette), RecordingEmbedBackend(embed, cassette)),
            {"chat": chat_model, "embed": embed_model},
        )
    return Gateway(chat, embed), {"chat": chat_model, "embed": embed_model}


def _build_evaluator(compare_url: str | None, scores: str | None,
                     gateway: Gateway | None) -> tuple[Any, str]:
    if compare_url and scores:
        raise ConfigError("--compare-url and --scores are mutually exclusive")
    if compare_url:
        return CachingEvaluator(HttpEvaluator(compare_url)), "http"
    if scores:
        return CachingEvaluator(ScriptedEvaluator.from_file(scores)), "scripted"
    if gateway is None:
        raise ConfigError("a chat backend is required for the judge evaluator")
    return CachingEvaluator(JudgeEvaluator(gateway)), "judge"


def _read_premise(premise: str | None, premise_file: str | None) -> str:
    if (premise is None) == (premise_file is None):
        raise ConfigError("provide exactly one of --premise or --premise-file")
    if premise is not None:
        return premise
    try:
        return Path(premise_file).read_text(encoding="utf-8").strip()
    except OSError as exc:
        raise ConfigError(f"cannot read premise file {premise_file}: {exc}") from exc


backend_options = [
    click.option("--cassette", type=click.Path(), default=None,
                 help="Cassette file for record/replay of chat and embedding calls."),
    click.option("--cassette-mode", type=click.Choice(["replay", "record", "live"]),
                 default="live", show_default=True,
                 help="replay serves only recorded calls; record passes through and saves."),
    click.option("--llm-base-url", envvar="LLM_BASE_URL", default=None,
                 help="OpenAI-compatible chat endpoint base URL [env: LLM_BASE_URL]."),
    click.option("--embed-base-url", envvar="EMBED_BASE_URL", default=None,
                 help="Embeddings endpoint base URL; defaults to the chat URL [env: EMBED_BASE_URL]."),
    click.option("--api-key", envvar="LLM_API_KEY", default="",
                 help="Bearer token for both endpoints [env: LLM_API_KEY]."),
    click.option("--chat-model", default="gpt-4", show_default=True, help="Chat model id."),
    click.option("--embed-model", default="text-embedding-ada-002", show_default=True,
                 help="Embedding model id."),
]


def _with_options(options: list[Any]) -> Callable[[Callable[..., Any]], Callable[..., Any]]:
    def wrap(fn: Callable[..., Any]) -> Callable[..., Any]:
        for option in reversed(options):
            fn = option(fn)
        return fn

    return wrap


@click.group()
def main() -> None:
    """Pacing-controlled story outlining and its evaluation tooling."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--premise", default=None, help="Premise text inline.")
@click.option("--premise-file", type=click.Path(), default=None, help="File holding the premise.")
@click.option("--strategy", type=click.Choice(["vaguest-first", "breadth-first"]), default=None,
              help="Expansion strategy. [default: vaguest-first]")
@click.option("--steps", type=int, default=None,
              help="Successful-expansion budget for vaguest-first. [default: 12]")
@click.option("--depth", type=int, default=None,
              help="Uniform depth for breadth-first, 1 to 5. [default: 3]")
@click.option("--seed", type=int, default=None, help="Run seed recorded in metadata. [default: 0]")
@click.option("--out", type=click.Path(), default=None, help="Outline JSON path; stdout if omitted.")
@click.option("--trace", type=click.Path(), default=None, help="JSONL trace of every expansion.")
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="TOML file with defaults; flags override it.")
@click.option("--compare-url", default=None, help="Concreteness compare service base URL.")
@click.option("--scores", type=click.Path(), default=None,
              help="Scripted concreteness score table (JSON).")
@click.option("--initial-temperature", type=float, default=None,
              help="First-attempt sampling temperature. [default: 0.7]")
@click.option("--temperature-increment", type=float, default=None,
              help="Temperature bump per restart. [default: 0.3]")
@click.option("--max-temperature", type=float, default=None,
              help="Temperature ceiling. [default: 1.5]")
@click.option("--rewrite-rounds", type=int, default=None,
              help="Rewrite prompts per attempt. [default: 3]")
@click.option("--max-restarts", type=int, default=None,
              help="Whole-expansion restarts. [default: 2]")
@click.option("--similarity-cutoff", type=float, default=None,
              help="Reject children with parent cosine above this. [default: 0.9]")
@click.option("--max-tokens", type=int, default=None,
              help="Completion budget per chat call. [default: 1024]")
@_with_options(backend_options)
@_exit_codes
def generate(
    premise: str | None,
    premise_file: str | None,
    strategy: str | None,
    steps: int | None,
    depth: int | None,
    seed: int | None,
    out: str | None,
    trace: str | None,
    config_path: str | None,
    compare_url: str | None,
    scores: str | None,
    initial_temperature: float | None,
    temperature_increment: float | None,
    max_temperature: float | None,
    rewrite_rounds: int | None,
    max_restarts: int | None,
    similarity_cutoff: float | None,
    max_tokens: int | None,
    cassette: str | None,
    cassette_mode: str,
    llm_base_url: str | None,
    embed_base_url: str | None,
    api_key: str,
    chat_model: str,
    embed_model: str,
) -> None:
    """Generate a hierarchical outline from a premise."""
    config = _load_config(config_path)
    strategy = _resolve(strategy, config, "strategy", "vaguest-first")
    steps = _resolve(steps, config, "steps", 12)
    depth = _resolve(depth, config, "depth", 3)
    seed = _resolve(seed, config, "seed", 0)
    engine_config = EngineConfig(
        initial_temperature=_resolve(initial_temperature, config, "initial_temperature", 0.7),
        temperature_increment=_resolve(temperature_increment, config, "temperature_increment", 0.3),
        max_temperature=_resolve(max_temperature, config, "max_temperature", 1.5),
        rewrite_rounds=_resolve(rewrite_rounds, config, "rewrite_rounds", 3),
        max_restarts=_resolve(max_restarts, config, "max_restarts", 2),
        similarity_cutoff=_resolve(similarity_cutoff, config, "similarity_cutoff", 0.9),
        max_tokens=_resolve(max_tokens, config, "max_tokens", 1024),
    )
    premise_text = _read_premise(premise, premise_file)
    if not premise_text:
        raise ConfigError("premise is empty")
    gateway, models = _build_gateway(cassette, cassette_mode, llm_base_url, embed_base_url,
                                     api_key, chat_model, embed_model)
    trace_writer = TraceWriter(trace)
    if strategy == "vaguest-first":
        evaluator, evaluator_name = _build_evaluator(compare_url, scores, gateway)
        models["evaluator"] = evaluator_name
        outline = run_vaguest_first(premise_text, steps, evaluator, gateway,
                                    config=engine_config, seed=seed, trace=trace_writer,
                                    models=models)
    else:
        outline = run_breadth_first(premise_text, depth, gateway, config=engine_config,
                                    trace=trace_writer, models=models)
    text = serialize(outline)
    if out is None:
        click.echo(text, nl=False)
    else:
        Path(out).write_text(text, encoding="utf-8")
    if "warning" in outline.metadata:
        click.echo(f"warning: {outline.metadata['warning']}", err=True)


@main.group()
def dataset() -> None:
    """Build comparator training data from a book corpus."""


@dataset.command("build")
@click.option("--manifest", "manifest_path", type=click.Path(), required=True,
              help="Corpus manifest JSON: {books: [{book_id, path, split, chapter_break_regex}]}.")
@click.option("--out", type=click.Path(), required=True, help="Summary records JSONL output.")
@click.option("--stats", "stats_path", type=click.Path(), default=None,
              help="Optional per-split/level stats JSON output.")
@click.option("--temperature", type=float, default=0.0, show_default=True,
              help="Summarization temperature.")
@click.option("--max-tokens", type=int, default=512, show_default=True,
              help="Completion budget per summary call.")
@_with_options(backend_options)
@_exit_codes
def dataset_build(
    manifest_path: str,
    out: str,
    stats_path: str | None,
    temperature: float,
    max_tokens: int,
    cassette: str | None,
    cassette_mode: str,
    llm_base_url: str | None,
    embed_base_url: str | None,
    api_key: str,
    chat_model: str,
    embed_model: str,
) -> None:
    """Summarize every chapter and paragraph in the manifest's books."""
    manifest = dataset_mod.load_manifest(manifest_path)
    gateway, _ = _build_gateway(cassette, cassette_mode, llm_base_url, embed_base_url,
                                api_key, chat_model, embed_model)
    records = dataset_mod.summarize_corpus(manifest, gateway, temperature=temperature,
                                           max_tokens=max_tokens)
    dataset_mod.write_records(records, out)
    click.echo(f"wrote {len(records)} summary records to {out}", err=True)
    if stats_path:
        stats = dataset_mod.dataset_stats(records)
        Path(stats_path).write_text(json.dumps(stats, indent=2) + "\n", encoding="utf-8")


@dataset.command("pairs")
@click.option("--records", "records_path", type=click.Path(), required=True,
              help="Summary records JSONL from `dataset build`.")
@click.option("--out", type=click.Path(), required=True, help="Training pairs JSONL output.")
@click.option("--epochs", type=int, default=1, show_default=True, help="Pairing epochs.")
@click.option("--pairs-per-epoch", type=int, default=1000, show_default=True,
              help="Pairs drawn per epoch.")
@click.option("--seed", type=int, default=0, show_default=True, help="Pairing and truncation seed.")
@_with_options(backend_options)
@_exit_codes
def dataset_pairs(
    records_path: str,
    out: str,
    epochs: int,
    pairs_per_epoch: int,
    seed: int,
    cassette: str | None,
    cassette_mode: str,
    llm_base_url: str | None,
    embed_base_url: str | None,
    api_key: str,
    chat_model: str,
    embed_model: str,
) -> None:
    """Pair summaries by embedding similarity and length-debias them."""
    records = dataset_mod.read_records(records_path)
    gateway, _ = _build_gateway(cassette, cassette_mode, llm_base_url, embed_base_url,
                                api_key, chat_model, embed_model)
    if gateway.embed_backend is None:
        raise ConfigError("pairing requires an embedding backend")
    rows = dataset_mod.build_training_pairs(records, epochs, pairs_per_epoch, seed,
                                            gateway.embed_backend)
    dataset_mod.write_pairs(rows, out)
    click.echo(f"wrote {len(rows)} training pairs to {out}", err=True)


@main.command()
@click.option("--outline", "outline_path", type=click.Path(), required=True,
              help="Outline JSON produced by `generate`.")
@click.option("--out", type=click.Path(), default=None, help="Story text path; stdout if omitted.")
@click.option("--words", type=int, default=75, show_default=True,
              help="Requested words per passage.")
@click.option("--window", type=int, default=5, show_default=True,
              help="Prior passages shown to the writer.")
@click.option("--temperature", type=float, default=0.7, show_default=True,
              help="Story-writing temperature.")
@click.option("--excerpt-tokens", type=int, default=None,
              help="Emit only a seeded contiguous excerpt near this many tokens.")
@click.option("--seed", type=int, default=0, show_default=True, help="Excerpt seed.")
@_with_options(backend_options)
@_exit_codes
def story(
    outline_path: str,
    out: str | None,
    words: int,
    window: int,
    temperature: float,
    excerpt_tokens: int | None,
    seed: int,
    cassette: str | None,
    cassette_mode: str,
    llm_base_url: str | None,
    embed_base_url: str | None,
    api_key: str,
    chat_model: str,
    embed_model: str,
) -> None:
    """Write the story for an outline, one passage per leaf."""
    try:
        outline = deserialize(Path(outline_path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read outline {outline_path}: {exc}") from exc
    gateway, _ = _build_gateway(cassette, cassette_mode, llm_base_url, embed_base_url,
                                api_key, chat_model, embed_model)
    passages = render_story(outline, gateway, words_per_passage=words, window_size=window,
                            temperature=temperature)
    if excerpt_tokens is not None:
        passages = story_excerpt(passages, excerpt_tokens, random.Random(seed))
    text = story_text(passages) + "\n"
    if out is None:
        click.echo(text, nl=False)
    else:
        Path(out).write_text(text, encoding="utf-8")


@main.group("eval")
def eval_group() -> None:
    """Comparator metrics and probe tasks."""


@eval_group.command("metrics")
@click.option("--predictions", "predictions_path", type=click.Path(), required=True,
              help="JSONL of {p, label} comparator outputs.")
@click.option("--band", type=float, default=0.1, show_default=True,
              help="Neutral band half-width around 0.5.")
@_exit_codes
def eval_metrics(predictions_path: str, band: float) -> None:
    """Print the seven comparator metrics as JSON."""
    predictions = []
    for i, line in enumerate(Path(predictions_path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            predictions.append(metrics_mod.Prediction(doc["p"], doc["label"]))
        except (ValueError, KeyError) as exc:
            raise FormatError(f"predictions line {i + 1} malformed: {exc}") from exc
    report = metrics_mod.metrics(predictions, band)
    click.echo(json.dumps(report, indent=2))


@eval_group.command("marked")
@click.option("--items", "items_path", type=click.Path(), required=True,
              help="JSONL of {leaves, marked_index} probe items.")
@click.option("--mode", type=click.Choice(["vague", "detailed"]), required=True,
              help="Whether the marked leaf is the vague or the detailed one.")
@click.option("--compare-url", default=None, help="Concreteness compare service base URL.")
@click.option("--scores", type=click.Path(), default=None,
              help="Scripted concreteness score table (JSON).")
@_with_options(backend_options)
@_exit_codes
def eval_marked(
    items_path: str,
    mode: str,
    compare_url: str | None,
    scores: str | None,
    cassette: str | None,
    cassette_mode: str,
    llm_base_url: str | None,
    embed_base_url: str | None,
    api_key: str,
    chat_model: str,
    embed_model: str,
) -> None:
    """Find marked leaves with the comparator and report accuracy and F1."""
    if compare_url or scores:
        evaluator, _ = _build_evaluator(compare_url, scores, None)
    else:
        if not cassette and not llm_base_url:
            raise ConfigError("eval marked needs --compare-url, --scores, or a chat backend")
        gateway, _ = _build_gateway(cassette, cassette_mode, llm_base_url, embed_base_url,
                                    api_key, chat_model, embed_model)
        evaluator, _ = _build_evaluator(None, None, gateway)
    results = []
    for i, line in enumerate(Path(items_path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            results.append(metrics_mod.marked_node_task(doc["leaves"], doc["marked_index"],
                                                        mode, evaluator))
        except (ValueError, KeyError) as exc:
            raise FormatError(f"items line {i + 1} malformed: {exc}") from exc
    report = {
        "items": len(results),
        "accuracy": metrics_mod.marked_accuracy(results),
        "f1": metrics_mod.marked_f1(results),
    }
    click.echo(json.dumps(report, indent=2))


@eval_group.command("judge")
@click.option("--items", "items_path", type=click.Path(), required=True,
              help="JSONL of {premise, a, b} comparison items.")
@click.option("--kind", type=click.Choice(["story", "outline"]), required=True,
              help="Whether the items are story excerpts or flattened outlines.")
@click.option("--seed", type=int, default=0, show_default=True,
              help="Seed for presentation-order counterbalancing.")
@click.option("--both-orientations", is_flag=True, default=False,
              help="Judge every item in both presentation orders.")
@_with_options(backend_options)
@_exit_codes
def eval_judge(
    items_path: str,
    kind: str,
    seed: int,
    both_orientations: bool,
    cassette: str | None,
    cassette_mode: str,
    llm_base_url: str | None,
    embed_base_url: str | None,
    api_key: str,
    chat_model: str,
    embed_model: str,
) -> None:
    """Judge A/B pairs with the four-question prompt and print win rates."""
    gateway, _ = _build_gateway(cassette, cassette_mode, llm_base_url, embed_base_url,
                                api_key, chat_model, embed_model)
    items = []
    for i, line in enumerate(Path(items_path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            items.append(metrics_mod.JudgePairItem(doc["premise"], doc["a"], doc["b"]))
        except (ValueError, KeyError) as exc:
            raise FormatError(f"items line {i + 1} malformed: {exc}") from exc
    report = metrics_mod.judge_pairs(gateway, items, kind, seed=seed,
                                     both_orientations=both_orientations)
    click.echo(json.dumps(report, indent=2))


if __name__ == "__main__":
    main()
