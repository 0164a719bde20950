"""Shared default artifacts: a deterministically trained vocabulary.

Training is seeded and the result is cached per process, so every component
that falls back to the default vocabulary agrees on token ids.
"""

from __future__ import annotations

import functools
import random

from .seeding import derive_seed
from .tokenizer import Vocabulary, train
from .workload import synth_code_text

DEFAULT_VOCAB_MERGES = 96
_CORPUS_CHARS = 16_000


@functools.cache
def default_vocabulary() -> Vocabulary:
    """Vocabulary trained on a fixed sample of the synthetic code generator."""
    rng = random.Random(derive_seed("default-vocabulary", 0))
    corpus = [synth_code_text(rng, _CORPUS_CHARS)]
    return train(corpus, 256 + 4 + DEFAULT_VOCAB_MERGES)
