"""OpenAI-compatible chat/embedding client with live, mock and replay transports.

Every exchange is keyed by a digest of the request body.  With a cache
directory configured, live and mock responses are stored as
``<cache_dir>/<hash>.json``; the replay transport serves only from there.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .core import CotforgeError
from .prompts import RenderedPrompt

log = logging.getLogger(__name__)

LIVE, MOCK, REPLAY = "live", "mock", "replay"
TRANSPORTS = (LIVE, MOCK, REPLAY)


class TransportError(CotforgeError):
    pass


class TransientError(TransportError):
    """Retryable failure: timeout, HTTP 429 or 5xx."""


class CacheMissError(TransportError):
    def __init__(self, request_hash: str):
        self.request_hash = request_hash
        super().__init__(f"replay cache has no entry for request {request_hash}")


class ProtocolError(TransportError):
    pass


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str = "https://api.openai.com/v1"
    model_name: str = "gpt-4o-mini"
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    max_in_flight: int = 4
    backoff_initial: float = 1.0
    backoff_multiplier: float = 2.0
    max_attempts: int = 3
    temperature: float = 0.0
    seed: int = 0
    embedding_model: str = "text-embedding-3-small"

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "EndpointConfig":
        known = cls.__dataclass_fields__
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown endpoint fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ChatExchange:
    request: dict
    response_text: str
    finish_reason: str | None
    usage: dict
    request_hash: str


def request_hash(path: str, body: dict) -> str:
    blob = json.dumps({"path": path, "body": body}, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------- transports


class LiveTransport:
    """POSTs to a real OpenAI-compatible server."""

    kind = LIVE

    def __init__(self, cfg: EndpointConfig, client=None):
        import httpx

        key = os.environ.get(cfg.api_key_env)
        if not key:
            raise TransportError(f"environment variable {cfg.api_key_env} is not set")
        self._httpx = httpx
        self._client = client or httpx.Client(
            base_url=cfg.base_url.rstrip("/"),
            timeout=cfg.timeout,
            headers={"Authorization": f"Bearer {key}"},
        )

    def post(self, path: str, body: dict) -> dict:
        try:
            resp = self._client.post(path, json=body)
        except self._httpx.TimeoutException as exc:
            raise TransientError(f"timeout: {exc}") from exc
        except self._httpx.TransportError as exc:
            raise TransientError(f"connection error: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        return resp.json()


class MockTransport:
    """In-process endpoint.

    ``responder(path, body)`` returns either a full response dict, a plain
    string (wrapped as a chat completion) or a list of vectors (wrapped as an
    embeddings response).  It may raise :class:`TransientError` to simulate
    outages.  A list of items is consumed in order instead.
    """

    kind = MOCK

    def __init__(self, responder: Callable | Sequence):
        self._lock = threading.Lock()
        if callable(responder):
            self._responder = responder
            self._script = None
        else:
            self._responder = None
            self._script = list(responder)
        self.requests: list[tuple[str, dict]] = []

    def post(self, path: str, body: dict) -> dict:
        with self._lock:
            self.requests.append((path, body))
            if self._script is not None:
                if not self._script:
                    raise TransportError("mock script exhausted")
                item = self._script.pop(0)
            else:
                item = None
        if self._responder is not None:
            item = self._responder(path, body)
        if isinstance(item, BaseException):
            raise item
        return wrap_response(path, body, item)


class ReplayTransport:
    kind = REPLAY

    def post(self, path: str, body: dict) -> dict:  # pragma: no cover - the gateway serves replay from cache
        raise CacheMissError(request_hash(path, body))


def wrap_response(path: str, body: dict, item) -> dict:
    if isinstance(item, dict):
        return item
    if path.endswith("/embeddings"):
        return {
            "object": "list",
            "model": body.get("model"),
            "data": [{"object": "embedding", "index": i, "embedding": [float(x) for x in v]} for i, v in enumerate(item)],
        }
    text = str(item)
    return {
        "object": "chat.completion",
        "model": body.get("model"),
        "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
        "usage": {"prompt_tokens": 0, "completion_tokens": len(text.split()), "total_tokens": len(text.split())},
    }


# ------------------------------------------------------------------- gateway


@dataclass
class GatewayStats:
    calls: int = 0  # logical calls, whether served live or from the replay cache
    requests: int = 0
    cache_hits: int = 0
    retries: int = 0
    max_in_flight_seen: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0


class Gateway:
    """Thread-safe client shared by all synthesis workers."""

    def __init__(self, cfg: EndpointConfig, transport, cache_dir: str | os.PathLike | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.cfg = cfg
        self.transport = transport
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        if self.cache_dir is not None and transport.kind != REPLAY:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        if transport.kind == REPLAY and self.cache_dir is None:
            raise TransportError("replay transport requires a cache directory")
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(cfg.max_in_flight)
        self._lock = threading.Lock()
        self._in_flight = 0
        self.stats = GatewayStats()
        self.exchanges: list[ChatExchange] = []

    @property
    def mode(self) -> str:
        return self.transport.kind

    # -- public API

    def complete(self, prompt: RenderedPrompt, *, temperature: float | None = None, seed: int | None = None) -> str:
        body = {
            "model": self.cfg.model_name,
            "messages": prompt.messages(),
            "temperature": self.cfg.temperature if temperature is None else temperature,
            "seed": self.cfg.seed if seed is None else seed,
        }
        h, resp = self._call("/chat/completions", body)
        try:
            choice = resp["choices"][0]
            text = choice["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"malformed chat completion response: {exc!r}") from None
        usage = resp.get("usage") or {}
        with self._lock:
            self.stats.prompt_tokens += int(usage.get("prompt_tokens", 0) or 0)
            self.stats.completion_tokens += int(usage.get("completion_tokens", 0) or 0)
            self.exchanges.append(ChatExchange(body, text, choice.get("finish_reason"), usage, h))
        log.debug("completion %s usage=%s", h[:12], usage)
        return text

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        texts = list(texts)
        if not texts:
            raise ValueError("embed() needs at least one text")
        body = {"model": self.cfg.embedding_model, "input": texts}
        _, resp = self._call("/embeddings", body)
        try:
            data = sorted(resp["data"], key=lambda d: d.get("index", 0))
            vectors = [[float(x) for x in d["embedding"]] for d in data]
        except (KeyError, TypeError) as exc:
            raise ProtocolError(f"malformed embeddings response: {exc!r}") from None
        if len(vectors) != len(texts):
            raise ProtocolError(f"expected {len(texts)} embeddings, got {len(vectors)}")
        dims = {len(v) for v in vectors}
        if len(dims) != 1:
            raise ProtocolError(f"embedding dimension mismatch in batch: {sorted(dims)}")
        return vectors

    # -- internals

    def _cache_file(self, h: str) -> Path:
        assert self.cache_dir is not None
        return self.cache_dir / f"{h}.json"

    def _call(self, path: str, body: dict) -> tuple[str, dict]:
        h = request_hash(path, body)
        with self._lock:
            self.stats.calls += 1
        if self.transport.kind == REPLAY:
            f = self._cache_file(h)
            if not f.exists():
                raise CacheMissError(h)
            with self._lock:
                self.stats.cache_hits += 1
            return h, json.loads(f.read_text(encoding="utf-8"))
        resp = self._with_retries(path, body)
        if self.cache_dir is not None:
            f = self._cache_file(h)
            tmp = f.with_name(f".{f.name}.{threading.get_ident()}.tmp")
            tmp.write_text(json.dumps(resp, sort_keys=True, ensure_ascii=False, indent=1), encoding="utf-8")
            os.replace(tmp, f)
        return h, resp

    def _with_retries(self, path: str, body: dict) -> dict:
        delay = self.cfg.backoff_initial
        last: Exception | None = None
        for attempt in range(1, self.cfg.max_attempts + 1):
            with self._slots:
                with self._lock:
                    self._in_flight += 1
                    self.stats.requests += 1
                    self.stats.max_in_flight_seen = max(self.stats.max_in_flight_seen, self._in_flight)
                try:
                    return self.transport.post(path, body)
                except TransientError as exc:
                    last = exc
                finally:
                    with self._lock:
                        self._in_flight -= 1
            if attempt < self.cfg.max_attempts:
                with self._lock:
                    self.stats.retries += 1
                log.warning("transient failure on %s (attempt %d/%d): %s", path, attempt, self.cfg.max_attempts, last)
                self._sleep(delay)
                delay *= self.cfg.backoff_multiplier
        raise TransportError(f"giving up after {self.cfg.max_attempts} attempts: {last}")


def make_transport(kind: str, cfg: EndpointConfig, responder=None):
    if kind == LIVE:
        return LiveTransport(cfg)
    if kind == MOCK:
        if responder is None:
            from .mock import SimulatedEndpoint

            responder = SimulatedEndpoint()
        return MockTransport(responder)
    if kind == REPLAY:
        return ReplayTransport()
    raise ValueError(f"unknown transport {kind!r}; expected one of {TRANSPORTS}")
