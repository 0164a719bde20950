"""Render and parse PSM, SPM, and EFIM infilling prompt layouts.

Prompt token sequences are always assembled segment-wise: each part is
tokenized on its own and the special ids are interposed.  That makes the
token sequence of an EFIM prompt a strict extension of the corresponding PSM
prompt's sequence, which is exactly what block-level prefix caching needs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import MalformedPromptError
from .tokenizer import DEFAULT_SPECIAL_DISPLAY, TokenSeq, Vocabulary, as_bytes


class PromptFormat(enum.Enum):
    PSM = "psm"
    SPM = "spm"
    EFIM = "efim"


@dataclass(frozen=True)
class PromptLayout:
    """A structured prompt: format tag plus raw byte segments.

    ``inc_chunks`` keeps the increment in the pieces it arrived in (one chunk
    per gateway round); rendering joins them, but tokenization encodes each
    chunk separately so a grown prompt's token sequence extends the previous
    one exactly.  A flat byte string is accepted and treated as one chunk.
    """

    format: PromptFormat
    prefix: bytes
    suffix: bytes
    inc_chunks: tuple[bytes, ...] = ()
    middle: bytes | None = None

    def __post_init__(self):
        object.__setattr__(self, "prefix", as_bytes(self.prefix))
        object.__setattr__(self, "suffix", as_bytes(self.suffix))
        chunks = self.inc_chunks
        if isinstance(chunks, (bytes, str)):
            chunks = (chunks,)
        chunks = tuple(as_bytes(c) for c in chunks if len(as_bytes(c)))
        object.__setattr__(self, "inc_chunks", chunks)
        if chunks and self.format is not PromptFormat.EFIM:
            raise ValueError("inc is only meaningful for EFIM layouts")

    @property
    def inc(self) -> bytes:
        return b"".join(self.inc_chunks)

    def render(self, specials: dict[str, str] | None = None) -> bytes:
        specials = specials or DEFAULT_SPECIAL_DISPLAY
        if self.format is PromptFormat.PSM:
            return render_psm(self.prefix, self.suffix, specials)
        if self.format is PromptFormat.SPM:
            return render_spm(self.prefix, self.suffix, specials)
        return render_efim(self.prefix, self.suffix, self.inc, specials)


def render_psm(
    prefix: bytes | str,
    suffix: bytes | str,
    specials: dict[str, str] | None = None,
) -> bytes:
    d = specials or DEFAULT_SPECIAL_DISPLAY
    return (
        d["P"].encode() + as_bytes(prefix) + d["S"].encode() + as_bytes(suffix)
        + d["M"].encode()
    )


def render_spm(
    prefix: bytes | str,
    suffix: bytes | str,
    specials: dict[str, str] | None = None,
) -> bytes:
    d = specials or DEFAULT_SPECIAL_DISPLAY
    return (
        d["S"].encode() + as_bytes(suffix) + d["P"].encode() + as_bytes(prefix)
        + d["M"].encode()
    )


def render_efim(
    common_prefix: bytes | str,
    suffix: bytes | str,
    inc: bytes | str,
    specials: dict[str, str] | None = None,
) -> bytes:
    return render_psm(common_prefix, suffix, specials) + as_bytes(inc)


def contains_special(data: bytes | str, specials: dict[str, str] | None = None) -> bool:
    """True if any special display string occurs in ``data``."""
    raw = as_bytes(data)
    d = specials or DEFAULT_SPECIAL_DISPLAY
    return any(disp.encode() in raw for disp in d.values())


def parse(prompt: bytes | str, specials: dict[str, str] | None = None) -> PromptLayout:
    """Inverse of render: classify by special-token order and split segments.

    Raises MalformedPromptError when P/S/M are missing, duplicated, or in an
    unrecognized order, or when the training-only E marker appears.
    """
    raw = as_bytes(prompt)
    d = specials or DEFAULT_SPECIAL_DISPLAY
    marks: dict[str, bytes] = {role: d[role].encode() for role in ("P", "S", "M")}
    if d["E"].encode() in raw:
        raise MalformedPromptError("end-of-infill marker inside a serving prompt")
    positions: dict[str, int] = {}
    for role, mark in marks.items():
        first = raw.find(mark)
        if first < 0:
            raise MalformedPromptError(f"missing special token {d[role]!r}")
        if raw.find(mark, first + len(mark)) >= 0:
            raise MalformedPromptError(f"duplicated special token {d[role]!r}")
        positions[role] = first

    p, s, m = positions["P"], positions["S"], positions["M"]
    if p == 0 and p < s < m:
        prefix = raw[len(marks["P"]) : s]
        suffix = raw[s + len(marks["S"]) : m]
        inc = raw[m + len(marks["M"]) :]
        if inc:
            return PromptLayout(PromptFormat.EFIM, prefix, suffix, inc)
        return PromptLayout(PromptFormat.PSM, prefix, suffix)
    if s == 0 and s < p < m:
        suffix = raw[len(marks["S"]) : p]
        prefix = raw[p + len(marks["P"]) : m]
        if raw[m + len(marks["M"]) :]:
            raise MalformedPromptError("trailing content after SPM prompt")
        return PromptLayout(PromptFormat.SPM, prefix, suffix)
    raise MalformedPromptError("special tokens in unrecognized order")


def encode_prompt(vocab: Vocabulary, layout: PromptLayout) -> TokenSeq:
    """Tokenize a layout segment-wise, interposing the special ids.

    Encoding each part separately (rather than the rendered string) keeps
    encode_prompt(EFIM(p, s, inc)) equal to encode_prompt(PSM(p, s)) followed
    by the increment's tokens; chunked increments encode chunk by chunk so
    successive gateway rounds only ever append tokens.
    """
    p, s, m = vocab.special_id("P"), vocab.special_id("S"), vocab.special_id("M")
    if layout.format is PromptFormat.SPM:
        return (
            [s] + vocab.encode(layout.suffix) + [p] + vocab.encode(layout.prefix) + [m]
        )
    tokens = (
        [p] + vocab.encode(layout.prefix) + [s] + vocab.encode(layout.suffix) + [m]
    )
    for chunk in layout.inc_chunks:
        tokens += vocab.encode(chunk)
    return tokens
