"""Per-user session pool and the six-way prompt construction decision.

Each session remembers the (prefix, suffix) of the user's previous request.
On the next request the gateway diffs both parts at byte granularity and
picks the prompt format:

* no session               -> PSM, session created
* prefix grew at the tail  -> EFIM with the new tail appended to the increment
* suffix grew at the head  -> PSM (the common prefix stays reusable)
* identical request        -> PSM
* anything else            -> PSM, treated as a fresh start

The session always stores the request's full (prefix, suffix) for diffing.
For EFIM construction it additionally tracks where the current growth chain
is anchored: the anchor is the prefix of the last PSM-issued round, and each
growth round appends one increment chunk.  Issuing the common part and the
chunks as separate segments keeps every chained prompt's token sequence a
strict extension of the previous round's, which is what makes the engine
cache hit on the whole prior prompt instead of just the raw prefix.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass

from .errors import RequestError
from .prompt_format import PromptFormat, PromptLayout, contains_special
from .tokenizer import DEFAULT_SPECIAL_DISPLAY, as_bytes


class Outcome(enum.Enum):
    NEW_SESSION_PSM = "NEW_SESSION_PSM"
    PREFIX_GROWTH_EFIM = "PREFIX_GROWTH_EFIM"
    SUFFIX_GROWTH_PSM = "SUFFIX_GROWTH_PSM"
    UNCHANGED_PSM = "UNCHANGED_PSM"
    RESET_PSM = "RESET_PSM"


@dataclass
class Session:
    """Most recent (prefix, suffix) plus the state of the EFIM growth chain.

    Invariant: prefix == prefix[:anchor_len] + b"".join(inc_chunks).
    """

    user_id: str
    prefix: bytes
    suffix: bytes
    last_used: int
    anchor_len: int
    inc_chunks: tuple[bytes, ...] = ()


@dataclass(frozen=True)
class InfillRequest:
    user_id: str
    prefix: bytes
    suffix: bytes
    max_new_tokens: int = 128

    def __post_init__(self):
        object.__setattr__(self, "prefix", as_bytes(self.prefix))
        object.__setattr__(self, "suffix", as_bytes(self.suffix))


@dataclass(frozen=True)
class PromptDiff:
    """Byte lengths of the issued layout's common prefix and increment."""

    common_prefix_len: int
    inc_len: int


@dataclass(frozen=True)
class GatewayDecision:
    outcome: Outcome
    layout: PromptLayout
    diff: PromptDiff


def longest_common_prefix(a: bytes, b: bytes) -> int:
    """Length in bytes of the longest shared prefix of ``a`` and ``b``."""
    limit = min(len(a), len(b))
    i = 0
    while i < limit and a[i] == b[i]:
        i += 1
    return i


class SessionPool:
    """Mutable map user_id -> Session with LRU bounding.

    Operations are serialized with a single lock, which satisfies the
    per-user atomicity contract: a request's decision and session update
    happen as one step.
    """

    def __init__(self, specials: dict[str, str] | None = None):
        self.specials = specials or DEFAULT_SPECIAL_DISPLAY
        self._sessions: dict[str, Session] = {}
        self._clock = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._sessions)

    def get(self, user_id: str) -> Session | None:
        return self._sessions.get(user_id)

    def handle_request(self, req: InfillRequest) -> GatewayDecision:
        self._validate(req)
        with self._lock:
            self._clock += 1
            session = self._sessions.get(req.user_id)
            decision, anchor_len, chunks = self._decide(session, req)
            self._sessions[req.user_id] = Session(
                req.user_id, req.prefix, req.suffix, self._clock, anchor_len, chunks
            )
            return decision

    def _validate(self, req: InfillRequest) -> None:
        if not req.user_id:
            raise RequestError("user_id must be nonempty")
        if req.max_new_tokens <= 0:
            raise RequestError("max_new_tokens must be positive")
        for name, part in (("prefix", req.prefix), ("suffix", req.suffix)):
            if contains_special(part, self.specials):
                raise RequestError(f"{name} contains a special token display string")

    def _decide(
        self, session: Session | None, req: InfillRequest
    ) -> tuple[GatewayDecision, int, tuple[bytes, ...]]:
        """Classify the (old, new) relationship; returns chain state as well.

        Every PSM outcome re-anchors the chain at the full new prefix; only
        prefix growth keeps the anchor and extends the chunk list.
        """
        psm = PromptLayout(PromptFormat.PSM, req.prefix, req.suffix)
        reset_chain = (len(req.prefix), ())
        if session is None:
            return (
                GatewayDecision(Outcome.NEW_SESSION_PSM, psm, PromptDiff(0, 0)),
                *reset_chain,
            )

        same_prefix = req.prefix == session.prefix
        same_suffix = req.suffix == session.suffix
        if same_prefix and same_suffix:
            decision = GatewayDecision(
                Outcome.UNCHANGED_PSM, psm, PromptDiff(len(req.prefix), 0)
            )
            return decision, *reset_chain
        if (
            same_suffix
            and not same_prefix
            and req.prefix.startswith(session.prefix)
        ):
            extension = req.prefix[len(session.prefix) :]
            chunks = session.inc_chunks + (extension,)
            layout = PromptLayout(
                PromptFormat.EFIM,
                session.prefix[: session.anchor_len],
                req.suffix,
                chunks,
            )
            decision = GatewayDecision(
                Outcome.PREFIX_GROWTH_EFIM,
                layout,
                PromptDiff(session.anchor_len, len(layout.inc)),
            )
            return decision, session.anchor_len, chunks
        if same_prefix and req.suffix.endswith(session.suffix):
            decision = GatewayDecision(
                Outcome.SUFFIX_GROWTH_PSM, psm, PromptDiff(len(req.prefix), 0)
            )
            return decision, *reset_chain
        common = longest_common_prefix(session.prefix, req.prefix)
        decision = GatewayDecision(Outcome.RESET_PSM, psm, PromptDiff(common, 0))
        return decision, *reset_chain

    def evict_idle(self, max_sessions: int) -> int:
        """Drop least-recently-used sessions until at most ``max_sessions`` remain."""
        if max_sessions < 0:
            raise ValueError("max_sessions must be >= 0")
        with self._lock:
            excess = len(self._sessions) - max_sessions
            if excess <= 0:
                return 0
            victims = sorted(self._sessions.values(), key=lambda s: s.last_used)
            for session in victims[:excess]:
                del self._sessions[session.user_id]
            return excess
