"""HTTP gateway: POST /v1/infill routed through the session pool.

The gateway transforms each request into the cheapest prompt layout, then
hands the layout to a completion backend:

* ``sim``  — in-process engine model: a block-level prefix cache accounts for
  reuse and a seeded generator fabricates the middle text.
* ``http`` — forwards the rendered prompt to an external completion endpoint
  as JSON ``{"prompt": ..., "max_tokens": ...}`` and expects ``{"text": ...}``.

Responses carry the gateway outcome and ``reused_token_estimate``, the
number of leading prompt tokens shared with the user's previous prompt.
"""

from __future__ import annotations

import hashlib
import random
import threading

import httpx
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .config import Config
from .errors import RequestError
from .kv_cache import CacheTree
from .prompt_format import PromptLayout, encode_prompt
from .session_gateway import GatewayDecision, InfillRequest, SessionPool
from .tokenizer import TokenSeq, Vocabulary
from .workload import synth_code_text


class SimBackend:
    """Engine stand-in: tracks cache reuse and fabricates deterministic text."""

    def __init__(self, config: Config, vocab: Vocabulary):
        self.vocab = vocab
        self.cache = CacheTree(config.block_size, config.cache_capacity_tokens)

    def complete(self, layout: PromptLayout, tokens: TokenSeq, max_new_tokens: int) -> str:
        self.cache.match_prefix(tokens)
        self.cache.insert(tokens)
        self.cache.release(tokens)
        seed = int.from_bytes(
            hashlib.sha256(layout.render() + bytes([max_new_tokens % 256])).digest()[:8],
            "big",
        )
        text = synth_code_text(random.Random(seed), max_new_tokens * 4)
        middle_ids = self.vocab.encode(text)[:max_new_tokens]
        return self.vocab.decode(middle_ids).decode("utf-8", "replace")


class HttpBackend:
    """Forwards rendered prompts to an external completion endpoint."""

    def __init__(self, url: str, transport: httpx.BaseTransport | None = None):
        self.url = url
        self._client = httpx.Client(transport=transport, timeout=30.0)

    def complete(self, layout: PromptLayout, tokens: TokenSeq, max_new_tokens: int) -> str:
        payload = {
            "prompt": layout.render().decode("utf-8", "replace"),
            "max_tokens": max_new_tokens,
        }
        response = self._client.post(self.url, json=payload)
        response.raise_for_status()
        return str(response.json()["text"])


class InfillBody(BaseModel):
    user_id: str
    prefix: str
    suffix: str
    max_new_tokens: int = 128


class GatewayService:
    """Session pool plus backend, serialized for per-user atomicity."""

    def __init__(
        self,
        config: Config,
        vocab: Vocabulary | None = None,
        backend: SimBackend | HttpBackend | None = None,
    ):
        self.config = config
        self.vocab = vocab or config.load_vocabulary()
        self.pool = SessionPool(config.special_tokens)
        if backend is not None:
            self.backend = backend
        elif config.backend == "http":
            self.backend = HttpBackend(config.backend_url or "")
        else:
            self.backend = SimBackend(config, self.vocab)
        self._last_tokens: dict[str, TokenSeq] = {}
        self._lock = threading.Lock()

    def handle(self, body: InfillBody) -> tuple[GatewayDecision, str, int]:
        request = InfillRequest(
            body.user_id, body.prefix, body.suffix, body.max_new_tokens
        )
        with self._lock:
            decision = self.pool.handle_request(request)
            tokens = encode_prompt(self.vocab, decision.layout)
            previous = self._last_tokens.get(body.user_id, [])
            reused = 0
            for a, b in zip(previous, tokens):
                if a != b:
                    break
                reused += 1
            self._last_tokens[body.user_id] = tokens
            middle = self.backend.complete(decision.layout, tokens, body.max_new_tokens)
            self.pool.evict_idle(self.config.session_pool_limit)
            self._trim_token_history()
            return decision, middle, reused

    def _trim_token_history(self) -> None:
        # Keep token history aligned with the live session pool.
        if len(self._last_tokens) > len(self.pool):
            live = {uid for uid in self._last_tokens if self.pool.get(uid) is not None}
            self._last_tokens = {uid: self._last_tokens[uid] for uid in live}


def create_app(
    config: Config | None = None,
    vocab: Vocabulary | None = None,
    backend: SimBackend | HttpBackend | None = None,
) -> FastAPI:
    service = GatewayService(config or Config.from_env(), vocab, backend)
    app = FastAPI(title="efimkit gateway")
    app.state.service = service

    @app.post("/v1/infill")
    def infill(body: InfillBody) -> dict:
        try:
            decision, middle, reused = service.handle(body)
        except RequestError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {
            "middle": middle,
            "outcome": decision.outcome.value,
            "reused_token_estimate": reused,
        }

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "sessions": len(service.pool)}

    return app
