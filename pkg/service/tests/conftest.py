"""Shared fixtures: one trained desk model, a checkpoint, a live server.

Training the desk profile on the synthetic pairs takes a few seconds, so
a single session-scoped run feeds every test that needs weights.
"""

from __future__ import annotations

import socket
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import httpx
import pytest
import uvicorn

from concoct_service.model import save_checkpoint
from concoct_service.serve import create_app
from concoct_service.train import DESK_TRAINER, TrainResult, train

from synthetic import synthetic_pairs

MODEL_ID = "test-pair-scorer"


@dataclass(frozen=True)
class TrainedRun:
    """A finished training run plus how long it took."""

    result: TrainResult
    elapsed: float


@pytest.fixture(scope="session")
def trained() -> TrainedRun:
    start = time.perf_counter()
    result = train(synthetic_pairs(), DESK_TRAINER, seed=0)
    return TrainedRun(result=result, elapsed=time.perf_counter() - start)


@pytest.fixture(scope="session")
def checkpoint_dir(trained: TrainedRun, tmp_path_factory: pytest.TempPathFactory) -> Path:
    out = tmp_path_factory.mktemp("checkpoint")
    save_checkpoint(out, trained.result.model, MODEL_ID)
    return out


def _free_port() -> int:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture(scope="session")
def live_server(checkpoint_dir: Path):
    port = _free_port()
    config = uvicorn.Config(
        create_app(checkpoint_dir),
        host="127.0.0.1",
        port=port,
        log_level="warning",
    )
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    base_url = f"http://127.0.0.1:{port}"
    deadline = time.monotonic() + 30.0
    while True:
        try:
            if httpx.get(f"{base_url}/healthz", timeout=1.0).status_code == 200:
                break
        except httpx.HTTPError:
            pass
        if time.monotonic() > deadline:
            raise RuntimeError("server did not come up")
        time.sleep(0.05)
    yield base_url
    server.should_exit = True
    thread.join(timeout=10.0)
