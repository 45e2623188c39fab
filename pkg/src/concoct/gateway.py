"""Chat and embedding backends with record/replay support.

Every chat exchange is addressed by a digest over the canonicalized request
(roles, contents, temperature rounded to two decimals, max_tokens), so a
cassette recorded once replays byte-identically with zero network access.
Embedding requests share the cassette, keyed by text.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol

import httpx

from .errors import BackendError, ReplayMissError

logger = logging.getLogger(__name__)

Message = dict[str, str]


@dataclass(frozen=True)
class ChatRequest:
    """One chat call: messages plus the sampling settings that matter."""

    messages: tuple[Message, ...]
    temperature: float
    max_tokens: int = 1024


def chat_request(messages: list[Message], temperature: float, max_tokens: int = 1024) -> ChatRequest:
    return ChatRequest(tuple(dict(m) for m in messages), temperature, max_tokens)


def canonical_chat_request(request: ChatRequest) -> dict[str, Any]:
    """Stable JSON form used for digests and cassette records."""
    return {
        "kind": "chat",
        "messages": [{"role": m["role"], "content": m["content"]} for m in request.messages],
        "temperature": round(request.temperature, 2),
        "max_tokens": request.max_tokens,
    }


def canonical_embed_request(text: str) -> dict[str, Any]:
    return {"kind": "embed", "text": text}


def request_digest(canonical: dict[str, Any]) -> str:
    blob = json.dumps(canonical, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class ChatBackend(Protocol):
    def chat(self, request: ChatRequest) -> str: ...


class EmbedBackend(Protocol):
    def embed(self, text: str) -> list[float]: ...


@dataclass
class RetryPolicy:
    """Retry transport errors, 5xx, and 429 with exponential backoff plus jitter."""

    attempts: int = 5
    base_delay: float = 1.0
    max_jitter: float = 0.5
    sleep: Callable[[float], None] = time.sleep
    rng: random.Random = field(default_factory=random.Random)

    def run(self, call: Callable[[], httpx.Response], what: str) -> httpx.Response:
        last_error: Exception | None = None
        for attempt in range(self.attempts):
            try:
                response = call()
            except httpx.HTTPError as exc:
                last_error = exc
            else:
                if response.status_code < 500 and response.status_code != 429:
                    return response
                last_error = BackendError(f"{what} returned HTTP {response.status_code}")
            if attempt + 1 < self.attempts:
                delay = self.base_delay * 2**attempt + self.rng.uniform(0, self.max_jitter)
                logger.warning("%s failed (attempt %d/%d), retrying in %.2fs: %s",
                               what, attempt + 1, self.attempts, delay, last_error)
                self.sleep(delay)
        raise BackendError(f"{what} failed after {self.attempts} attempts: {last_error}")


class HttpChatBackend:
    """OpenAI-compatible chat completions client."""

    def __init__(
        self,
        base_url: str,
        api_key: str = "",
        model: str = "default",
        retry: RetryPolicy | None = None,
        timeout: float = 120.0,
    ) -> None:
        self._base_url = base_url.rstrip("/")
        self._model = model
        self._retry = retry or RetryPolicy()
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(headers=headers, timeout=timeout)

    def chat(self, request: ChatRequest) -> str:
        body = {
            "model": self._model,
            "messages": [dict(m) for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        url = f"{self._base_url}/chat/completions"
        response = self._retry.run(lambda: self._client.post(url, json=body), "chat completion")
        if response.status_code != 200:
            raise BackendError(f"chat completion returned HTTP {response.status_code}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise BackendError(f"chat completion reply malformed: {exc}") from exc


class HttpEmbedBackend:
    """OpenAI-compatible embeddings client."""

    def __init__(
        self,
        base_url: str,
        api_key: str = "",
        model: str = "default",
        retry: RetryPolicy | None = None,
        timeout: float = 120.0,
    ) -> None:
        self._base_url = base_url.rstrip("/")
        self._model = model
        self._retry = retry or RetryPolicy()
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(headers=headers, timeout=timeout)

    def embed(self, text: str) -> list[float]:
        body = {"model": self._model, "input": text}
        url = f"{self._base_url}/embeddings"
        response = self._retry.run(lambda: self._client.post(url, json=body), "embedding")
        if response.status_code != 200:
            raise BackendError(f"embedding returned HTTP {response.status_code}")
        try:
            vector = response.json()["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise BackendError(f"embedding reply malformed: {exc}") from exc
        return [float(x) for x in vector]


class FunctionChatBackend:
    """Chat backend driven by a pure function; used as a deterministic double."""

    def __init__(self, fn: Callable[[ChatRequest], str]) -> None:
        self._fn = fn

    def chat(self, request: ChatRequest) -> str:
        return self._fn(request)


class FunctionEmbedBackend:
    """Embedding backend driven by a pure function."""

    def __init__(self, fn: Callable[[str], list[float]]) -> None:
        self._fn = fn

    def embed(self, text: str) -> list[float]:
        return self._fn(text)


class FixtureEmbedBackend:
    """Embedding backend serving vectors from a fixed table; errors on miss."""

    def __init__(self, table: dict[str, list[float]]) -> None:
        self._table = dict(table)

    def embed(self, text: str) -> list[float]:
        if text not in self._table:
            raise BackendError(f"no fixture embedding for text {text!r}")
        return list(self._table[text])


class Cassette:
    """JSONL store of {digest, request, reply} records, safe for threads."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, Any] = {}
        if self.path.exists():
            for i, line in enumerate(self.path.read_text(encoding="utf-8").splitlines()):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    self._entries[record["digest"]] = record["reply"]
                except (ValueError, KeyError) as exc:
                    raise BackendError(f"cassette {self.path} line {i + 1} malformed: {exc}") from exc

    def get(self, digest: str) -> Any:
        with self._lock:
            if digest not in self._entries:
                raise ReplayMissError(digest)
            return self._entries[digest]

    def put(self, digest: str, request: dict[str, Any], reply: Any) -> None:
        with self._lock:
            if digest in self._entries:
                return
            self._entries[digest] = reply
            record = {"digest": digest, "request": request, "reply": reply}
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(json.dumps(record, ensure_ascii=False) + "\n")


class ReplayChatBackend:
    """Serves chat replies from a cassette; a miss is a hard error."""

    def __init__(self, cassette: Cassette) -> None:
        self._cassette = cassette

    def chat(self, request: ChatRequest) -> str:
        reply = self._cassette.get(request_digest(canonical_chat_request(request)))
        if not isinstance(reply, str):
            raise BackendError("cassette entry for chat request is not a string")
        return reply


class RecordingChatBackend:
    """Passes chat calls through to ``inner`` and appends them to a cassette."""

    def __init__(self, inner: ChatBackend, cassette: Cassette) -> None:
        self._inner = inner
        self._cassette = cassette

    def chat(self, request: ChatRequest) -> str:
        canonical = canonical_chat_request(request)
        reply = self._inner.chat(request)
        self._cassette.put(request_digest(canonical), canonical, reply)
        return reply


class ReplayEmbedBackend:
    def __init__(self, cassette: Cassette) -> None:
        self._cassette = cassette

    def embed(self, text: str) -> list[float]:
        reply = self._cassette.get(request_digest(canonical_embed_request(text)))
        if not isinstance(reply, list):
            raise BackendError("cassette entry for embed request is not a vector")
        return [float(x) for x in reply]


class RecordingEmbedBackend:
    def __init__(self, inner: EmbedBackend, cassette: Cassette) -> None:
        self._inner = inner
        self._cassette = cassette

    def embed(self, text: str) -> list[float]:
        canonical = canonical_embed_request(text)
        vector = self._inner.embed(text)
        self._cassette.put(request_digest(canonical), canonical, vector)
        return vector


@dataclass
class Gateway:
    """Bundle of the chat and embedding backends a run talks to."""

    chat_backend: ChatBackend
    embed_backend: EmbedBackend | None = None

    def chat(self, messages: list[Message], temperature: float, max_tokens: int = 1024) -> str:
        return self.chat_backend.chat(chat_request(messages, temperature, max_tokens))

    def embed(self, text: str) -> list[float]:
        if self.embed_backend is None:
            raise BackendError("no embedding backend configured")
        return self.embed_backend.embed(text)
