"""HTTP service exposing the pair scorer.

POST /compare        {"t0": str, "t1": str}        -> {"p": float}
POST /compare_batch  {"pairs": [[t0, t1], ...]}    -> {"p": [float, ...]}
GET  /healthz                                      -> {"status", "model"}

Malformed bodies get 400; requests before the checkpoint finishes loading
get 503.  Inference runs in eval mode, so identical requests score
identically.
"""

from __future__ import annotations

from contextlib import asynccontextmanager

import torch
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .errors import ValidationError
from .model import PairScorer, load_checkpoint, pad_batch
from .tokenizer import HashTokenizer


class Scorer:
    """Thread-safe inference wrapper; the model is read-only after load."""

    def __init__(self, model: PairScorer, tokenizer: HashTokenizer, model_id: str) -> None:
        self.model = model.eval()
        self.tokenizer = tokenizer
        self.model_id = model_id

    def compare_batch(self, pairs: list[tuple[str, str]]) -> list[float]:
        encoded = [self.tokenizer.encode_pair(t0, t1).ids for t0, t1 in pairs]
        ids, mask = pad_batch(encoded)
        with torch.no_grad():
            return torch.sigmoid(self.model(ids, mask)).tolist()

    def compare(self, t0: str, t1: str) -> float:
        return self.compare_batch([(t0, t1)])[0]


def _bad_request(message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=400)


def _loading() -> JSONResponse:
    return JSONResponse({"error": "model is loading"}, status_code=503)


async def _json_body(request: Request) -> dict | JSONResponse:
    try:
        body = await request.json()
    except ValueError:
        return _bad_request("body is not valid JSON")
    if not isinstance(body, dict):
        return _bad_request("body must be a JSON object")
    return body


def create_app(checkpoint_dir: str, lazy: bool = False) -> FastAPI:
    """App serving ``checkpoint_dir``; ``lazy`` defers loading to startup."""

    def _load(app: FastAPI) -> None:
        model, tokenizer, model_id = load_checkpoint(checkpoint_dir)
        app.state.scorer = Scorer(model, tokenizer, model_id)

    @asynccontextmanager
    async def _lifespan(app: FastAPI):
        if app.state.scorer is None:
            _load(app)
        yield

    app = FastAPI(lifespan=_lifespan)
    app.state.scorer = None
    if not lazy:
        _load(app)

    @app.get("/healthz")
    def healthz() -> JSONResponse:
        if app.state.scorer is None:
            return JSONResponse({"status": "loading"}, status_code=503)
        return JSONResponse({"status": "ok", "model": app.state.scorer.model_id})

    @app.post("/compare")
    async def compare(request: Request) -> JSONResponse:
        if app.state.scorer is None:
            return _loading()
        body = await _json_body(request)
        if isinstance(body, JSONResponse):
            return body
        t0, t1 = body.get("t0"), body.get("t1")
        if not isinstance(t0, str) or not isinstance(t1, str):
            return _bad_request("t0 and t1 must be strings")
        try:
            p = app.state.scorer.compare(t0, t1)
        except ValidationError as exc:
            return _bad_request(str(exc))
        return JSONResponse({"p": p})

    @app.post("/compare_batch")
    async def compare_batch(request: Request) -> JSONResponse:
        if app.state.scorer is None:
            return _loading()
        body = await _json_body(request)
        if isinstance(body, JSONResponse):
            return body
        pairs = body.get("pairs")
        if not isinstance(pairs, list) or not pairs:
            return _bad_request("pairs must be a non-empty list")
        cleaned = []
        for item in pairs:
            if (not isinstance(item, (list, tuple)) or len(item) != 2
                    or not all(isinstance(t, str) for t in item)):
                return _bad_request("each pair must be [t0, t1] strings")
            cleaned.append((item[0], item[1]))
        try:
            scores = app.state.scorer.compare_batch(cleaned)
        except ValidationError as exc:
            return _bad_request(str(exc))
        return JSONResponse({"p": scores})

    return app
