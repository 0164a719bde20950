"""Training-data processing: three-way infilling reordering and fragment
tokenization.

The classic pipeline splits a document into (prefix, middle, suffix), moves
the middle behind the suffix, and tokenizes the three parts independently,
so subtokens only ever appear next to the special markers.  Fragment
tokenization additionally chops text into segments of uniformly distributed
length and tokenizes each segment on its own, which plants subtoken
boundaries at arbitrary positions.  ``combined_pipeline`` applies both: the
three-way reordering first, then fragment tokenization inside each part.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import DocumentTooShortError, InvalidTokenError
from .prompt_format import PromptFormat
from .seeding import derive_seed
from .tokenizer import TokenSeq, Vocabulary, as_bytes, is_word_interior_boundary


@dataclass(frozen=True)
class Document:
    id: str
    text: bytes

    def __post_init__(self):
        object.__setattr__(self, "text", as_bytes(self.text))
        if not self.text:
            raise ValueError("document text must be nonempty")


@dataclass(frozen=True)
class ProcessedSample:
    doc_id: str
    tokens: tuple[int, ...]
    boundary_offsets: tuple[int, ...]  # document offsets where encoding restarted
    word_interior_boundaries: int


@dataclass(frozen=True)
class SubtokenStats:
    boundaries_total: int
    word_interior: int

    @property
    def fraction(self) -> float:
        if self.boundaries_total == 0:
            return 0.0
        return self.word_interior / self.boundaries_total


def _split_points(n: int, rng: random.Random) -> tuple[int, int]:
    i, j = rng.randint(0, n), rng.randint(0, n)
    return min(i, j), max(i, j)


def _count_interior(text: bytes, offsets: Sequence[int]) -> int:
    return sum(1 for off in offsets if is_word_interior_boundary(text, off))


def _segment_starts(length: int, rng: random.Random, min_len: int, max_len: int) -> list[int]:
    """Interior restart offsets for left-to-right segmentation of ``length`` bytes."""
    starts: list[int] = []
    pos = 0
    while pos < length:
        pos += rng.randint(min_len, max_len)
        if 0 < pos < length:
            starts.append(pos)
    return starts


def _encode_fragmented(
    vocab: Vocabulary, data: bytes, starts: Sequence[int]
) -> TokenSeq:
    tokens: TokenSeq = []
    bounds = [0, *starts, len(data)]
    for lo, hi in zip(bounds, bounds[1:]):
        tokens += vocab.encode(data[lo:hi])
    return tokens


def fim_transform_at(
    vocab: Vocabulary,
    doc: Document,
    a: int,
    b: int,
    mode: PromptFormat = PromptFormat.PSM,
) -> ProcessedSample:
    """Three-way reordering with explicit split points (a <= b)."""
    if not 0 <= a <= b <= len(doc.text):
        raise ValueError("split points out of range")
    if mode not in (PromptFormat.PSM, PromptFormat.SPM):
        raise ValueError("training samples use PSM or SPM order")
    prefix, middle, suffix = doc.text[:a], doc.text[a:b], doc.text[b:]
    p, s, m, e = (vocab.special_id(role) for role in ("P", "S", "M", "E"))
    if mode is PromptFormat.PSM:
        tokens = [p, *vocab.encode(prefix), s, *vocab.encode(suffix), m,
                  *vocab.encode(middle), e]
    else:
        tokens = [s, *vocab.encode(suffix), p, *vocab.encode(prefix), m,
                  *vocab.encode(middle), e]
    offsets = (a, b)
    return ProcessedSample(
        doc.id, tuple(tokens), offsets, _count_interior(doc.text, offsets)
    )


def fim_transform(
    vocab: Vocabulary,
    doc: Document,
    rng: random.Random,
    mode: PromptFormat = PromptFormat.PSM,
) -> ProcessedSample:
    """Three-way reordering with uniformly drawn split points."""
    if len(doc.text) < 3:
        raise DocumentTooShortError(doc.id)
    a, b = _split_points(len(doc.text), rng)
    return fim_transform_at(vocab, doc, a, b, mode)


def fragment_tokenize(
    vocab: Vocabulary,
    doc: Document,
    rng: random.Random,
    min_len: int = 1,
    max_len: int = 200,
) -> ProcessedSample:
    """Segment-wise encoding with uniform [min_len, max_len] segment lengths.

    The final segment is whatever remains.  Decoding the concatenated tokens
    reproduces the document exactly.
    """
    if min_len < 1 or max_len < min_len:
        raise ValueError("need 1 <= min_len <= max_len")
    starts = _segment_starts(len(doc.text), rng, min_len, max_len)
    tokens = _encode_fragmented(vocab, doc.text, starts)
    return ProcessedSample(
        doc.id, tuple(tokens), tuple(starts), _count_interior(doc.text, starts)
    )


def combined_pipeline(
    vocab: Vocabulary,
    doc: Document,
    rng: random.Random,
    mode: PromptFormat = PromptFormat.PSM,
    min_len: int = 1,
    max_len: int = 200,
) -> ProcessedSample:
    """Three-way reordering, then fragment tokenization inside each part.

    Parts consume the rng in output order, so with max_len >= every part
    length the result coincides with fim_transform for the same draws.
    """
    if len(doc.text) < 3:
        raise DocumentTooShortError(doc.id)
    if mode not in (PromptFormat.PSM, PromptFormat.SPM):
        raise ValueError("training samples use PSM or SPM order")
    a, b = _split_points(len(doc.text), rng)
    prefix, middle, suffix = doc.text[:a], doc.text[a:b], doc.text[b:]
    p, s, m, e = (vocab.special_id(role) for role in ("P", "S", "M", "E"))

    def fragment(part: bytes, base: int) -> tuple[TokenSeq, list[int]]:
        starts = _segment_starts(len(part), rng, min_len, max_len)
        return _encode_fragmented(vocab, part, starts), [base + off for off in starts]

    if mode is PromptFormat.PSM:
        prefix_tok, prefix_off = fragment(prefix, 0)
        suffix_tok, suffix_off = fragment(suffix, b)
        middle_tok, middle_off = fragment(middle, a)
        tokens = [p, *prefix_tok, s, *suffix_tok, m, *middle_tok, e]
    else:
        suffix_tok, suffix_off = fragment(suffix, b)
        prefix_tok, prefix_off = fragment(prefix, 0)
        middle_tok, middle_off = fragment(middle, a)
        tokens = [s, *suffix_tok, p, *prefix_tok, m, *middle_tok, e]
    offsets = tuple(sorted([a, b, *prefix_off, *middle_off, *suffix_off]))
    return ProcessedSample(
        doc.id, tuple(tokens), offsets, _count_interior(doc.text, offsets)
    )


def reconstruct(vocab: Vocabulary, sample: ProcessedSample) -> bytes:
    """Rebuild the original document text from a processed token stream."""
    p, s, m, e = (vocab.special_id(role) for role in ("P", "S", "M", "E"))
    tokens = list(sample.tokens)
    if not any(tid in (p, s, m, e) for tid in tokens):
        return vocab.decode(tokens)

    segments: dict[int, TokenSeq] = {p: [], s: [], m: []}
    current: TokenSeq | None = None
    for tid in tokens:
        if tid == e:
            break
        if tid in segments:
            current = segments[tid]
            continue
        if current is None or vocab.is_special(tid):
            raise InvalidTokenError("unexpected special structure in sample")
        current.append(tid)
    # Marker role X holds the part written right after marker X; document
    # order is prefix + middle + suffix regardless of sample order.
    return vocab.decode(segments[p]) + vocab.decode(segments[m]) + vocab.decode(segments[s])


def subtoken_stats(samples: Iterable[ProcessedSample]) -> SubtokenStats:
    total = 0
    interior = 0
    count = 0
    for sample in samples:
        total += len(sample.boundary_offsets)
        interior += sample.word_interior_boundaries
        count += 1
    if count == 0:
        raise ValueError("subtoken_stats needs at least one sample")
    return SubtokenStats(total, interior)


def process_corpus(
    vocab: Vocabulary,
    docs: Iterable[Document],
    seed: int,
    pipeline: str = "fragment",
    psm_fraction: float = 0.5,
    min_len: int = 1,
    max_len: int = 200,
) -> Iterator[ProcessedSample]:
    """Process documents independently with per-document derived seeds.

    ``pipeline`` is "fim" (three-way reordering only) or "fragment" (the
    combined pipeline).  Documents that are too short are skipped.
    """
    if pipeline not in ("fim", "fragment"):
        raise ValueError("pipeline must be 'fim' or 'fragment'")
    for doc in docs:
        rng = random.Random(derive_seed(seed, "doc", doc.id))
        mode = PromptFormat.PSM if rng.random() < psm_fraction else PromptFormat.SPM
        try:
            if pipeline == "fim":
                yield fim_transform(vocab, doc, rng, mode)
            else:
                yield combined_pipeline(vocab, doc, rng, mode, min_len, max_len)
        except DocumentTooShortError:
            continue


def write_shards(samples: Iterable[ProcessedSample], path: str | Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(
                json.dumps(
                    {
                        "id": sample.doc_id,
                        "token_ids": list(sample.tokens),
                        "boundary_offsets": list(sample.boundary_offsets),
                    },
                    sort_keys=True,
                )
                + "\n"
            )
            count += 1
    return count
