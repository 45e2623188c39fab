"""Shared fixtures: recorded cassettes and score tables for replay tests."""

from __future__ import annotations

from pathlib import Path

import pytest

import worlds

FIXTURES = Path(__file__).parent / "fixtures"
CASSETTES = FIXTURES / "cassettes"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def twelve_step_fixture() -> dict[str, Path]:
    return worlds.record_vaguest_run(CASSETTES, "twelve_step", worlds.world_plain(), steps=12)


@pytest.fixture(scope="session")
def rewrite_fixture() -> dict[str, Path]:
    return worlds.record_vaguest_run(CASSETTES, "rewrite", worlds.world_rewrite_saves(), steps=2)


@pytest.fixture(scope="session")
def doomed_fixture() -> dict[str, Path]:
    return worlds.record_vaguest_run(CASSETTES, "doomed", worlds.world_doomed_leaf(), steps=2)


@pytest.fixture(scope="session")
def breadth_fixture() -> dict[str, Path]:
    return worlds.record_breadth_run(CASSETTES, "breadth", depth=3)


@pytest.fixture(scope="session")
def dataset_fixture() -> dict[str, Path]:
    return worlds.record_dataset_fixture(CASSETTES, FIXTURES / "corpus")


@pytest.fixture(scope="session")
def story_fixture() -> dict[str, Path]:
    return worlds.record_story_fixture(CASSETTES)


@pytest.fixture(scope="session")
def judge_fixture() -> dict[str, Path]:
    return worlds.record_judge_fixture(CASSETTES)
