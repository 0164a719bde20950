"""Block-granular token-prefix cache with reference counts and LRU eviction.

Models the cross-request reuse bookkeeping of a paged-attention engine: token
sequences are cached in fixed-size blocks arranged as a trie, a request first
matches (and pins) the longest cached block-aligned prefix of its prompt,
then inserts its remaining full blocks, and finally releases its pins.
Trailing partial blocks are never cached.  A match may end inside a stored
block only when it consumes the entire query, which covers repeated prompts
that are prefixes of longer cached ones.

The tree assumes a single writer: one logical thread drives
match_prefix/insert/release (the simulator and the HTTP service both hold a
lock around the triple).  Statistics reads are safe from anywhere.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterator, Sequence

from .errors import CacheAccountingError, UndefinedMetricError

Block = tuple[int, ...]


@dataclass
class CacheStats:
    """Monotone counters; reuse rate is reused / (reused + computed)."""

    reused_tokens: int = 0
    computed_tokens: int = 0
    evicted_tokens: int = 0


def reuse_rate(stats: CacheStats) -> float:
    total = stats.reused_tokens + stats.computed_tokens
    if total == 0:
        raise UndefinedMetricError("no tokens recorded yet")
    return stats.reused_tokens / total


class _Node:
    __slots__ = ("block", "parent", "children", "refcount", "last_access", "seq", "alive")

    def __init__(self, block: Block | None, parent: "_Node | None", tick: int, seq: int):
        self.block = block
        self.parent = parent
        self.children: dict[Block, _Node] = {}
        self.refcount = 0
        self.last_access = tick
        self.seq = seq
        self.alive = True

    def evictable(self) -> bool:
        return self.alive and self.refcount == 0 and not self.children


class CacheTree:
    """Token-prefix trie storing one fixed-size block per node."""

    def __init__(
        self,
        block_size: int = 16,
        capacity_tokens: int | None = None,
        stats: CacheStats | None = None,
    ):
        if block_size <= 0:
            raise ValueError("block_size must be positive")
        if capacity_tokens is not None and capacity_tokens < 0:
            raise ValueError("capacity_tokens must be >= 0 or None for unbounded")
        self.block_size = block_size
        self.capacity_tokens = capacity_tokens
        self.stats = stats or CacheStats()
        self._root = _Node(None, None, 0, 0)
        self._tick = 0
        self._seq = 0
        self._occupied = 0
        # Lazy min-heap of (last_access, seq, node); stale entries are skipped.
        self._evict_heap: list[tuple[int, int, _Node]] = []

    @property
    def occupied_tokens(self) -> int:
        return self._occupied

    # -- request lifecycle ---------------------------------------------------

    def match_prefix(self, tokens: Sequence[int]) -> int:
        """Longest cached block-aligned prefix of ``tokens``; pins the path.

        The matched length is a multiple of block_size unless the entire
        query lies inside cached blocks, in which case it equals len(tokens).
        Also records len(tokens) - matched as computed tokens.
        """
        self._tick += 1
        matched = 0
        node = self._root
        for block in self._full_blocks(tokens):
            child = node.children.get(block)
            if child is None:
                node = None
                break
            child.refcount += 1
            child.last_access = self._tick
            matched += self.block_size
            node = child
        if node is not None:
            tail = tuple(tokens[matched:])
            if tail:
                partial = self._tail_child(node, tail)
                if partial is not None:
                    partial.refcount += 1
                    partial.last_access = self._tick
                    matched = len(tokens)
        self.stats.reused_tokens += matched
        self.stats.computed_tokens += len(tokens) - matched
        return matched

    def insert(self, tokens: Sequence[int]) -> int:
        """Cache the remaining full blocks of ``tokens``; returns tokens added.

        Call after match_prefix for the same sequence: existing path nodes
        are already pinned, and nodes created here start pinned so the
        pairing release() balances.  Evicts LRU unpinned leaves when space is
        needed; if eviction cannot free enough, caches what fits.
        """
        self._tick += 1
        node = self._root
        added = 0
        for block in self._full_blocks(tokens):
            child = node.children.get(block)
            if child is None:
                if not self._make_room():
                    break
                self._seq += 1
                child = _Node(block, node, self._tick, self._seq)
                child.refcount = 1
                node.children[block] = child
                self._occupied += self.block_size
                added += self.block_size
            node = child
        return added

    def release(self, tokens: Sequence[int]) -> None:
        """Unpin every cached node covering ``tokens``.

        Walks the same path match_prefix/insert touched; an unpinned node on
        that path means the pairing was broken (double release).
        """
        node = self._root
        consumed = 0
        for block in self._full_blocks(tokens):
            child = node.children.get(block)
            if child is None:
                node = None
                break
            self._unpin(child)
            consumed += self.block_size
            node = child
        if node is not None:
            tail = tuple(tokens[consumed:])
            if tail:
                partial = self._tail_child(node, tail)
                if partial is not None:
                    self._unpin(partial)

    # -- internals -----------------------------------------------------------

    def _full_blocks(self, tokens: Sequence[int]) -> Iterator[Block]:
        bs = self.block_size
        for start in range(0, len(tokens) - bs + 1, bs):
            yield tuple(tokens[start : start + bs])

    @staticmethod
    def _tail_child(node: _Node, tail: Block) -> "_Node | None":
        # First child (insertion order) whose block begins with the tail;
        # any such block proves the whole query is cached.
        for block, child in node.children.items():
            if block[: len(tail)] == tail:
                return child
        return None

    def _unpin(self, node: _Node) -> None:
        if node.refcount <= 0:
            raise CacheAccountingError("release of an unpinned path")
        node.refcount -= 1
        if node.refcount == 0:
            self._offer(node)

    def _offer(self, node: _Node) -> None:
        if node.evictable():
            heapq.heappush(self._evict_heap, (node.last_access, node.seq, node))

    def _make_room(self) -> bool:
        """Evict until one more block fits; False if it cannot."""
        if self.capacity_tokens is None:
            return True
        while self._occupied + self.block_size > self.capacity_tokens:
            if not self._evict_one():
                return False
        return True

    def _evict_one(self) -> bool:
        while self._evict_heap:
            last_access, seq, node = heapq.heappop(self._evict_heap)
            if (
                not node.evictable()
                or node.last_access != last_access
                or node.seq != seq
            ):
                continue
            parent = node.parent
            assert parent is not None and node.block is not None
            del parent.children[node.block]
            node.alive = False
            self._occupied -= self.block_size
            self.stats.evicted_tokens += self.block_size
            if parent is not self._root:
                self._offer(parent)
            return True
        return False

    # -- inspection (tests, reports) ------------------------------------------

    def iter_nodes(self) -> Iterator[_Node]:
        stack = list(self._root.children.values())
        while stack:
            node = stack.pop()
            yield node
            stack.extend(node.children.values())
