import random

import pytest

from efimkit.defaults import default_vocabulary
from efimkit.tokenizer import Vocabulary, train
from efimkit.workload import synth_code_text


@pytest.fixture(scope="session")
def byte_vocab() -> Vocabulary:
    return Vocabulary.base()


@pytest.fixture(scope="session")
def small_vocab() -> Vocabulary:
    corpus = [synth_code_text(random.Random(7), 4000)]
    return train(corpus, 256 + 4 + 32)


@pytest.fixture(scope="session")
def default_vocab() -> Vocabulary:
    return default_vocabulary()
