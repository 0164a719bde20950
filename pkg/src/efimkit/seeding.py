"""Deterministic seed derivation, stable across platforms and runs."""

from __future__ import annotations

import hashlib


def derive_seed(*parts: int | str) -> int:
    """Derive a 63-bit seed from a sequence of labels and integers.

    Uses SHA-256 rather than ``hash()`` so results do not depend on
    PYTHONHASHSEED.
    """
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[:8], "big") >> 1
