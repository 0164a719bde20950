"""Deterministic closed-loop multi-user infilling workload generation.

Scripts are synthesized from a seeded code-like text generator so that edit
boundaries can land inside identifiers (subtoken splits) or between tokens.
Rounds carry no wall-clock times: the simulator defines arrival of round r+1
as the completion instant of round r.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

from .errors import ConfigError, TraceParseError
from .seeding import derive_seed
from .tokenizer import is_word_interior_boundary

# Inclusive integer range; a fixed value is (v, v).
IntRange = tuple[int, int]


@dataclass(frozen=True)
class WorkloadSpec:
    """Knobs for script generation.

    Character ranges are calibrated against the default trained vocabulary so
    the default workload averages about 2355 prompt tokens per request with
    a 50/50 prefix/suffix token split.
    """

    num_users: int = 16
    rounds: int = 5
    initial_prefix_chars: IntRange = (2000, 2420)
    initial_suffix_chars: IntRange = (2420, 2960)
    inc_chars: IntRange = (200, 280)
    output_tokens: IntRange = (128, 128)
    subtoken_split_probability: float = 0.5
    prefix_tail_growth: float = 1.0
    suffix_head_growth: float = 0.0
    seed: int = 1234

    def __post_init__(self):
        if self.num_users <= 0 or self.rounds <= 0:
            raise ConfigError("num_users and rounds must be positive")
        if not 0.0 <= self.subtoken_split_probability <= 1.0:
            raise ConfigError("subtoken_split_probability must be in [0, 1]")
        if abs(self.prefix_tail_growth + self.suffix_head_growth - 1.0) > 1e-9:
            raise ConfigError("edit mix fractions must sum to 1")
        if min(self.prefix_tail_growth, self.suffix_head_growth) < 0:
            raise ConfigError("edit mix fractions must be nonnegative")
        for name in ("initial_prefix_chars", "initial_suffix_chars", "inc_chars", "output_tokens"):
            lo, hi = getattr(self, name)
            if lo < 1 or hi < lo:
                raise ConfigError(f"{name} must satisfy 1 <= lo <= hi")

    @property
    def mean_request_chars(self) -> float:
        """Expected prefix+suffix characters per request (prefix-growth mix)."""
        p = (self.initial_prefix_chars[0] + self.initial_prefix_chars[1]) / 2
        s = (self.initial_suffix_chars[0] + self.initial_suffix_chars[1]) / 2
        inc = (self.inc_chars[0] + self.inc_chars[1]) / 2
        grown = (self.rounds - 1) / 2 * inc  # average growth across rounds
        return p + s + grown

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.__dict__, indent=2) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "WorkloadSpec":
        data = json.loads(Path(path).read_text())
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown workload spec keys: {sorted(unknown)}")
        for name in ("initial_prefix_chars", "initial_suffix_chars", "inc_chars", "output_tokens"):
            if name in data:
                data[name] = tuple(data[name])
        return cls(**data)


@dataclass(frozen=True)
class RoundEvent:
    prefix: bytes
    suffix: bytes
    output_tokens: int


@dataclass(frozen=True)
class UserScript:
    user_id: str
    rounds: tuple[RoundEvent, ...]


# ---------------------------------------------------------------------------
# Synthetic code-like text

_KEYWORDS = (
    "def", "return", "if", "else", "elif", "for", "while", "class", "import",
    "from", "try", "except", "with", "lambda", "yield", "pass", "raise",
    "assert", "not", "and", "or", "in", "is", "None", "True", "False",
)

_STEMS = (
    "value", "result", "index", "count", "total", "buffer", "cache", "token",
    "block", "query", "item", "node", "state", "config", "handler", "stream",
    "offset", "length", "window", "batch", "score", "limit", "entry", "shard",
    "queue", "record", "cursor", "payload", "metric", "slot",
)


def _ident(rng: random.Random) -> str:
    stem = rng.choice(_STEMS)
    if rng.random() < 0.5:
        return f"{stem}_{rng.choice(_STEMS)}"
    return f"{stem}_{rng.randrange(100)}"


def synth_code_text(rng: random.Random, min_chars: int) -> str:
    """Seeded code-like text of at least ``min_chars`` characters."""
    lines: list[str] = []
    size = 0
    while size < min_chars:
        kind = rng.randrange(6)
        if kind == 0:
            line = f"def {_ident(rng)}({_ident(rng)}, {_ident(rng)}):"
        elif kind == 1:
            line = f"    {_ident(rng)} = {_ident(rng)}({_ident(rng)}, {rng.randrange(1000)})"
        elif kind == 2:
            line = f"    if {_ident(rng)} > {rng.randrange(100)}:"
        elif kind == 3:
            line = f"        return {_ident(rng)} + {_ident(rng)} * {rng.randrange(10)}"
        elif kind == 4:
            line = f"    for {_ident(rng)} in {_ident(rng)}:"
        else:
            line = f"    {rng.choice(_KEYWORDS)} {_ident(rng)}"
        lines.append(line)
        size += len(line) + 1
    return "\n".join(lines) + "\n"


def _choose_cut(text: str, target: int, interior: bool, floor: int = 1) -> int:
    """Pick a cut position near ``target`` with the requested boundary kind.

    Candidates are limited to [floor, n-1] so growth rounds never move the
    cut backwards.
    """
    data = text.encode()  # generator output is ASCII, offsets line up
    n = len(data)
    target = max(floor, min(target, n - 1))
    lo = max(floor, target - 60)
    hi = min(n - 1, target + 60)
    candidates = [
        pos
        for pos in range(lo, hi + 1)
        if is_word_interior_boundary(data, pos) == interior
    ]
    if not candidates:
        return target
    return min(candidates, key=lambda pos: (abs(pos - target), pos))


# ---------------------------------------------------------------------------
# Script generation

def generate(spec: WorkloadSpec, seed: int | None = None) -> list[UserScript]:
    """Build one script per user; byte-identical given (spec, seed)."""
    base_seed = spec.seed if seed is None else seed
    scripts = []
    for idx in range(spec.num_users):
        rng = random.Random(derive_seed(base_seed, "user", idx))
        scripts.append(_user_script(spec, f"user-{idx:03d}", rng))
    return scripts


def _user_script(spec: WorkloadSpec, user_id: str, rng: random.Random) -> UserScript:
    inc_hi = spec.inc_chars[1]
    p0 = rng.randint(*spec.initial_prefix_chars)
    s0 = rng.randint(*spec.initial_suffix_chars)
    # slack grows with rounds so cut targets never clip at the stream end
    slack = 200 + 100 * spec.rounds
    prefix_stream = synth_code_text(rng, p0 + (spec.rounds - 1) * inc_hi + slack)
    suffix_stream = synth_code_text(rng, s0 + (spec.rounds - 1) * inc_hi + slack)

    interior = rng.random() < spec.subtoken_split_probability
    cut = _choose_cut(prefix_stream, p0, interior)
    suffix_start = len(suffix_stream) - s0

    rounds = [_round(prefix_stream, cut, suffix_stream, suffix_start, spec, rng)]
    for _ in range(spec.rounds - 1):
        if rng.random() < spec.prefix_tail_growth:
            interior = rng.random() < spec.subtoken_split_probability
            step = rng.randint(*spec.inc_chars)
            cut = _choose_cut(prefix_stream, cut + step, interior, floor=cut + 1)
        else:
            suffix_start = max(0, suffix_start - rng.randint(*spec.inc_chars))
        rounds.append(_round(prefix_stream, cut, suffix_stream, suffix_start, spec, rng))
    return UserScript(user_id, tuple(rounds))


def _round(
    prefix_stream: str,
    cut: int,
    suffix_stream: str,
    suffix_start: int,
    spec: WorkloadSpec,
    rng: random.Random,
) -> RoundEvent:
    return RoundEvent(
        prefix=prefix_stream[:cut].encode(),
        suffix=suffix_stream[suffix_start:].encode(),
        output_tokens=rng.randint(*spec.output_tokens),
    )


# ---------------------------------------------------------------------------
# JSONL traces

_TRACE_FIELDS = ("user_id", "round", "prefix", "suffix", "output_tokens")


def to_jsonl(scripts: Iterable[UserScript], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for script in scripts:
            for r, event in enumerate(script.rounds):
                fh.write(
                    json.dumps(
                        {
                            "user_id": script.user_id,
                            "round": r,
                            "prefix": event.prefix.decode("utf-8", "surrogateescape"),
                            "suffix": event.suffix.decode("utf-8", "surrogateescape"),
                            "output_tokens": event.output_tokens,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )


def from_jsonl(path: str | Path) -> list[UserScript]:
    """Load scripts from a JSONL trace, grouping by user and sorting rounds.

    Traces may violate the growth invariants of generated scripts; such
    rounds simply exercise the gateway's reset path.
    """
    per_user: dict[str, list[tuple[int, RoundEvent]]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceParseError(f"invalid JSON: {exc.msg}", lineno) from exc
            if not isinstance(record, dict):
                raise TraceParseError("expected a JSON object", lineno)
            for field in _TRACE_FIELDS:
                if field not in record:
                    raise TraceParseError(f"missing field {field!r}", lineno)
            try:
                event = RoundEvent(
                    prefix=str(record["prefix"]).encode("utf-8", "surrogateescape"),
                    suffix=str(record["suffix"]).encode("utf-8", "surrogateescape"),
                    output_tokens=int(record["output_tokens"]),
                )
                rnd = int(record["round"])
            except (TypeError, ValueError) as exc:
                raise TraceParseError(str(exc), lineno) from exc
            per_user.setdefault(str(record["user_id"]), []).append((rnd, event))
    scripts = []
    for user_id, rounds in per_user.items():
        rounds.sort(key=lambda item: item[0])
        scripts.append(UserScript(user_id, tuple(event for _, event in rounds)))
    return scripts


def with_users(spec: WorkloadSpec, num_users: int) -> WorkloadSpec:
    return replace(spec, num_users=num_users)
