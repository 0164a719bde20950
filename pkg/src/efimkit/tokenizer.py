"""Lossless byte-level tokenizer with reserved special tokens.

The vocabulary always contains all 256 single-byte tokens, so encoding is
total over arbitrary byte strings (including invalid UTF-8) and decoding is
plain concatenation.  A small byte-pair-merge trainer grows the vocabulary
beyond the byte base; encoding uses greedy longest match against the final
token table, which keeps encode a pure function of (vocabulary, input).

Special tokens (roles P, S, M, E) hold reserved ids that the encoder never
emits for content; they are interposed explicitly when prompts or training
samples are assembled.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, InvalidTokenError

# A token sequence is a plain list of vocabulary ids.
TokenSeq = list[int]

SPECIAL_ROLES = ("P", "S", "M", "E")
DEFAULT_SPECIAL_DISPLAY = {"P": "<P>", "S": "<S>", "M": "<M>", "E": "<E>"}

_WORD_BYTES = frozenset(
    b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_"
)


def as_bytes(text: bytes | str) -> bytes:
    """Normalize str input to UTF-8 bytes; bytes pass through unchanged."""
    if isinstance(text, str):
        return text.encode("utf-8")
    if isinstance(text, bytes):
        return text
    return bytes(text)


@dataclass(frozen=True)
class SpecialToken:
    role: str
    token_id: int
    display: str


class Vocabulary:
    """Immutable id<->bytes table: specials first, 256 byte tokens, then merges.

    Instances are safe to share across threads; encode/decode never mutate.
    """

    def __init__(
        self,
        specials: Sequence[SpecialToken],
        content: Sequence[tuple[int, bytes]],
    ):
        self._specials = {s.role: s for s in specials}
        self._special_by_id = {s.token_id: s for s in specials}
        self._content_by_id = {tid: tok for tid, tok in content}
        self._id_by_bytes = {tok: tid for tid, tok in content}
        self._validate()
        # Greedy matching aids: longest content token per leading byte.
        self._max_len_by_first: dict[int, int] = {}
        for tok in self._id_by_bytes:
            first = tok[0]
            if len(tok) > self._max_len_by_first.get(first, 0):
                self._max_len_by_first[first] = len(tok)

    def _validate(self) -> None:
        if tuple(self._specials) != SPECIAL_ROLES:
            raise ConfigError(f"special roles must be exactly {SPECIAL_ROLES}")
        if len(self._special_by_id) != len(self._specials):
            raise ConfigError("duplicate special token ids")
        if len(self._id_by_bytes) != len(self._content_by_id):
            raise ConfigError("duplicate content token byte strings")
        if self._special_by_id.keys() & self._content_by_id.keys():
            raise ConfigError("special token ids collide with content token ids")
        all_ids = sorted(self._special_by_id.keys() | self._content_by_id.keys())
        if all_ids != list(range(len(all_ids))):
            raise ConfigError("token ids are not dense 0..N-1")
        for b in range(256):
            if bytes([b]) not in self._id_by_bytes:
                raise ConfigError(f"missing single-byte token {b:#04x}")
        displays = [s.display.encode("utf-8") for s in self._specials.values()]
        if len(set(displays)) != len(displays):
            raise ConfigError("special display strings must be distinct")
        for disp in displays:
            for tok in self._id_by_bytes:
                if len(tok) > 1 and disp in tok:
                    raise ConfigError(
                        f"special display {disp!r} appears inside content token {tok!r}"
                    )

    # -- introspection ------------------------------------------------------

    @property
    def size(self) -> int:
        return len(self._special_by_id) + len(self._content_by_id)

    @property
    def specials(self) -> dict[str, SpecialToken]:
        return dict(self._specials)

    @property
    def special_display(self) -> dict[str, str]:
        return {role: s.display for role, s in self._specials.items()}

    def special_id(self, role: str) -> int:
        return self._specials[role].token_id

    def is_special(self, token_id: int) -> bool:
        return token_id in self._special_by_id

    def token_bytes(self, token_id: int) -> bytes:
        """Byte string of a content token (specials are not content)."""
        try:
            return self._content_by_id[token_id]
        except KeyError:
            raise InvalidTokenError(f"id {token_id} is not a content token") from None

    def content_tokens(self) -> list[tuple[int, bytes]]:
        return sorted(self._content_by_id.items())

    # -- encode / decode ----------------------------------------------------

    def encode(self, text: bytes | str) -> TokenSeq:
        """Greedy longest-match segmentation; total thanks to byte fallback."""
        data = as_bytes(text)
        ids: TokenSeq = []
        pos = 0
        n = len(data)
        lookup = self._id_by_bytes
        while pos < n:
            limit = min(self._max_len_by_first.get(data[pos], 1), n - pos)
            for length in range(limit, 0, -1):
                tid = lookup.get(data[pos : pos + length])
                if tid is not None:
                    ids.append(tid)
                    pos += length
                    break
        return ids

    def decode(self, tokens: Iterable[int]) -> bytes:
        """Concatenate token byte strings; specials render as display text."""
        out = bytearray()
        for tid in tokens:
            special = self._special_by_id.get(tid)
            if special is not None:
                out += special.display.encode("utf-8")
                continue
            tok = self._content_by_id.get(tid)
            if tok is None:
                raise InvalidTokenError(f"unknown token id {tid}")
            out += tok
        return bytes(out)

    # -- persistence --------------------------------------------------------

    def save(self, path: str | Path) -> None:
        payload = {
            "specials": {
                role: {"id": s.token_id, "display": s.display}
                for role, s in self._specials.items()
            },
            "tokens": [
                {"id": tid, "hex": tok.hex()} for tid, tok in self.content_tokens()
            ],
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
            specials = [
                SpecialToken(role, entry["id"], entry["display"])
                for role, entry in payload["specials"].items()
            ]
            content = [
                (entry["id"], bytes.fromhex(entry["hex"]))
                for entry in payload["tokens"]
            ]
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise ConfigError(f"invalid vocabulary file {path}: {exc}") from exc
        return cls(specials, content)

    @classmethod
    def base(
        cls, special_display: dict[str, str] | None = None
    ) -> "Vocabulary":
        """Byte-fallback vocabulary with no merges."""
        return _build(special_display or DEFAULT_SPECIAL_DISPLAY, [])


def _build(special_display: dict[str, str], merges: list[bytes]) -> Vocabulary:
    specials = [
        SpecialToken(role, i, special_display[role])
        for i, role in enumerate(SPECIAL_ROLES)
    ]
    offset = len(specials)
    content = [(offset + b, bytes([b])) for b in range(256)]
    content += [(offset + 256 + i, tok) for i, tok in enumerate(merges)]
    return Vocabulary(specials, content)


def train(
    corpus: Iterable[bytes | str],
    target_size: int,
    special_display: dict[str, str] | None = None,
) -> Vocabulary:
    """Learn byte-pair merges until the vocabulary reaches ``target_size``.

    Deterministic given corpus order: the most frequent adjacent pair wins
    each round, ties broken by the lexicographically smallest merged byte
    string.  Merges stop early once no pair occurs at least twice.  Pairs
    whose merged bytes would contain a special display string are skipped so
    the display strings stay reserved.
    """
    display = special_display or DEFAULT_SPECIAL_DISPLAY
    if set(display) != set(SPECIAL_ROLES):
        raise ConfigError(f"special display map must cover roles {SPECIAL_ROLES}")
    floor = 256 + len(SPECIAL_ROLES)
    if target_size < floor:
        raise ConfigError(
            f"target_size {target_size} below minimum {floor} (bytes + specials)"
        )
    reserved = [d.encode("utf-8") for d in display.values()]

    sequences = [
        [bytes([b]) for b in as_bytes(item)] for item in corpus if len(as_bytes(item))
    ]
    merges: list[bytes] = []
    for _ in range(target_size - floor):
        counts: Counter[tuple[bytes, bytes]] = Counter()
        for seq in sequences:
            counts.update(zip(seq, seq[1:]))
        best_pair: tuple[bytes, bytes] | None = None
        best_count = 1  # pairs must occur at least twice to be worth merging
        best_merged = b""
        for pair, count in counts.items():
            merged = pair[0] + pair[1]
            if any(disp in merged for disp in reserved):
                continue
            if count > best_count or (count == best_count and merged < best_merged):
                best_pair, best_count, best_merged = pair, count, merged
        if best_pair is None:
            break
        merges.append(best_merged)
        sequences = [_apply_merge(seq, best_pair, best_merged) for seq in sequences]
    return _build(display, merges)


def _apply_merge(
    seq: list[bytes], pair: tuple[bytes, bytes], merged: bytes
) -> list[bytes]:
    out: list[bytes] = []
    i = 0
    n = len(seq)
    while i < n:
        if i + 1 < n and seq[i] == pair[0] and seq[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(seq[i])
            i += 1
    return out


def is_word_interior_boundary(text: bytes | str, pos: int) -> bool:
    """True iff splitting ``text`` at ``pos`` lands inside a word.

    Word characters are ASCII alphanumerics plus underscore, the alphabet of
    identifiers in code corpora.  A split is interior when the characters on
    both sides are word characters, i.e. it produces fragments like
    "pri" / "nt".
    """
    data = as_bytes(text)
    if not 0 <= pos <= len(data):
        raise ValueError(f"pos {pos} outside [0, {len(data)}]")
    if pos == 0 or pos == len(data):
        return False
    return data[pos - 1] in _WORD_BYTES and data[pos] in _WORD_BYTES
