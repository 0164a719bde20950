"""Shared JSON configuration for the CLI and the HTTP service."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .defaults import default_vocabulary
from .engine_sim import DEFAULT_DECODE_COST, DEFAULT_PREFILL_COST, EngineConfig, Scheme
from .errors import ConfigError
from .tokenizer import DEFAULT_SPECIAL_DISPLAY, SPECIAL_ROLES, Vocabulary

ENV_CONFIG_PATH = "EFIM_CONFIG"


@dataclass(frozen=True)
class Config:
    special_tokens: dict[str, str] = field(
        default_factory=lambda: dict(DEFAULT_SPECIAL_DISPLAY)
    )
    block_size: int = 16
    cache_capacity_tokens: int | None = 1_000_000
    prefill_cost_per_token: float = DEFAULT_PREFILL_COST
    decode_cost_per_token: float = DEFAULT_DECODE_COST
    backend: str = "sim"
    backend_url: str | None = None
    session_pool_limit: int = 1024
    seed: int = 1234
    vocab_path: str | None = None

    def __post_init__(self):
        if set(self.special_tokens) != set(SPECIAL_ROLES):
            raise ConfigError(f"special_tokens must cover roles {SPECIAL_ROLES}")
        if self.backend not in ("sim", "http"):
            raise ConfigError("backend must be 'sim' or 'http'")
        if self.backend == "http" and not self.backend_url:
            raise ConfigError("http backend requires backend_url")
        if self.block_size <= 0:
            raise ConfigError("block_size must be positive")
        if self.cache_capacity_tokens is not None and self.cache_capacity_tokens < 0:
            raise ConfigError("cache_capacity_tokens must be >= 0 or null")
        if self.session_pool_limit < 0:
            raise ConfigError("session_pool_limit must be >= 0")
        if self.prefill_cost_per_token <= 0 or self.decode_cost_per_token <= 0:
            raise ConfigError("per-token costs must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "Config":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "Config":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)

    @classmethod
    def from_env(cls) -> "Config":
        path = os.environ.get(ENV_CONFIG_PATH)
        return cls.load(path) if path else cls()

    def engine_config(self, scheme: Scheme) -> EngineConfig:
        return EngineConfig(
            block_size=self.block_size,
            cache_capacity_tokens=self.cache_capacity_tokens,
            prefill_cost_per_token=self.prefill_cost_per_token,
            decode_cost_per_token=self.decode_cost_per_token,
            scheme=scheme,
        )

    def load_vocabulary(self) -> Vocabulary:
        if self.vocab_path:
            return Vocabulary.load(self.vocab_path)
        return default_vocabulary()
