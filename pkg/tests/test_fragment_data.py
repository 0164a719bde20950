import random

import pytest

from efimkit.errors import DocumentTooShortError
from efimkit.fragment_data import (
    Document,
    combined_pipeline,
    fim_transform,
    fim_transform_at,
    fragment_tokenize,
    process_corpus,
    reconstruct,
    subtoken_stats,
    write_shards,
)
from efimkit.prompt_format import PromptFormat
from efimkit.seeding import derive_seed
from efimkit.tokenizer import is_word_interior_boundary
from efimkit.workload import synth_code_text


class FakeRng:
    """Scripted randint values; random() always 0 (keeps mode choices fixed)."""

    def __init__(self, values):
        self.values = list(values)

    def randint(self, lo, hi):
        v = self.values.pop(0)
        assert lo <= v <= hi, f"scripted value {v} outside [{lo}, {hi}]"
        return v

    def random(self):
        return 0.0


class TestFimTransform:
    def test_forced_splits_psm(self, byte_vocab):
        doc = Document("d", b"abc")
        sample = fim_transform(byte_vocab, doc, FakeRng([1, 2]), PromptFormat.PSM)
        assert byte_vocab.decode(sample.tokens) == b"<P>a<S>c<M>b<E>"
        assert sample.boundary_offsets == (1, 2)

    def test_forced_splits_spm(self, byte_vocab):
        doc = Document("d", b"abc")
        sample = fim_transform(byte_vocab, doc, FakeRng([1, 2]), PromptFormat.SPM)
        assert byte_vocab.decode(sample.tokens) == b"<S>c<P>a<M>b<E>"

    def test_whole_text_as_middle(self, byte_vocab):
        doc = Document("d", b"abcdef")
        sample = fim_transform_at(byte_vocab, doc, 0, len(doc.text))
        assert byte_vocab.decode(sample.tokens) == b"<P><S><M>abcdef<E>"

    def test_reconstruction(self, small_vocab):
        rng = random.Random(3)
        doc = Document("d", synth_code_text(rng, 400).encode())
        for mode in (PromptFormat.PSM, PromptFormat.SPM):
            sample = fim_transform(small_vocab, doc, random.Random(11), mode)
            assert reconstruct(small_vocab, sample) == doc.text

    def test_too_short_is_skip_signal(self, byte_vocab):
        with pytest.raises(DocumentTooShortError):
            fim_transform(byte_vocab, Document("d", b"ab"), random.Random(0))

    def test_split_points_sorted(self, byte_vocab):
        doc = Document("d", b"0123456789" * 10)
        for seed in range(20):
            sample = fim_transform(byte_vocab, doc, random.Random(seed))
            a, b = sample.boundary_offsets
            assert 0 <= a <= b <= len(doc.text)


class TestFragmentTokenize:
    def test_forced_lengths(self, byte_vocab):
        text = bytes(random.Random(0).randrange(97, 123) for _ in range(500))
        doc = Document("d", text)
        sample = fragment_tokenize(byte_vocab, doc, FakeRng([200, 200, 200]))
        assert sample.boundary_offsets == (200, 400)

    def test_losslessness(self, small_vocab):
        for seed in range(10):
            text = synth_code_text(random.Random(seed), 600).encode()
            doc = Document(f"d{seed}", text)
            sample = fragment_tokenize(small_vocab, doc, random.Random(seed + 1))
            assert small_vocab.decode(sample.tokens) == text

    def test_interior_count_matches_offsets(self, byte_vocab):
        text = synth_code_text(random.Random(2), 800).encode()
        doc = Document("d", text)
        sample = fragment_tokenize(byte_vocab, doc, random.Random(5), 1, 50)
        expected = sum(
            1 for off in sample.boundary_offsets if is_word_interior_boundary(text, off)
        )
        assert sample.word_interior_boundaries == expected

    def test_exact_multiple_has_no_trailing_boundary(self, byte_vocab):
        doc = Document("d", b"x" * 400)
        sample = fragment_tokenize(byte_vocab, doc, FakeRng([200, 200]))
        assert sample.boundary_offsets == (200,)

    def test_interior_fraction_matches_offset_scan_oracle(self, byte_vocab):
        # Oracle: fraction of word-interior positions over all interior offsets.
        docs = [
            Document(f"d{i}", synth_code_text(random.Random(i), 500).encode())
            for i in range(300)
        ]
        interior_positions = total_positions = 0
        for doc in docs:
            for pos in range(1, len(doc.text)):
                total_positions += 1
                interior_positions += is_word_interior_boundary(doc.text, pos)
        expected = interior_positions / total_positions

        boundaries = interior = 0
        for i, doc in enumerate(docs):
            sample = fragment_tokenize(byte_vocab, doc, random.Random(1000 + i))
            boundaries += len(sample.boundary_offsets)
            interior += sample.word_interior_boundaries
        assert boundaries > 500
        assert abs(interior / boundaries - expected) < 0.02


class TestCombinedPipeline:
    def test_degenerate_equals_fim_transform(self, byte_vocab):
        text = b"alpha beta gamma delta"
        doc = Document("d", text)
        fim = fim_transform(byte_vocab, doc, random.Random(9))
        combined = combined_pipeline(
            byte_vocab, doc, random.Random(9), max_len=len(text) + 1
        )
        assert combined.tokens == fim.tokens

    def test_boundaries_superset_of_fim(self, byte_vocab):
        doc = Document("d", synth_code_text(random.Random(1), 700).encode())
        fim = fim_transform(byte_vocab, doc, random.Random(4))
        combined = combined_pipeline(byte_vocab, doc, random.Random(4), max_len=60)
        assert set(fim.boundary_offsets) <= set(combined.boundary_offsets)
        assert len(combined.boundary_offsets) >= len(fim.boundary_offsets)

    def test_reconstruction(self, small_vocab):
        doc = Document("d", synth_code_text(random.Random(8), 900).encode())
        for mode in (PromptFormat.PSM, PromptFormat.SPM):
            sample = combined_pipeline(
                small_vocab, doc, random.Random(21), mode, max_len=80
            )
            assert reconstruct(small_vocab, sample) == doc.text

    def test_more_subtoken_exposure_than_fim(self, byte_vocab):
        docs = [
            Document(f"d{i}", synth_code_text(random.Random(50 + i), 600).encode())
            for i in range(60)
        ]
        fim_total = combined_total = 0
        for i, doc in enumerate(docs):
            seed = derive_seed("expose", i)
            fim_total += fim_transform(
                byte_vocab, doc, random.Random(seed)
            ).word_interior_boundaries
            combined_total += combined_pipeline(
                byte_vocab, doc, random.Random(seed), max_len=60
            ).word_interior_boundaries
        assert combined_total > fim_total


class TestSubtokenStats:
    def test_single_sample_fraction(self, byte_vocab):
        doc = Document("d", b"ab cd")
        sample = fim_transform_at(byte_vocab, doc, 1, 3)  # offsets 1 interior, 3 not
        stats = subtoken_stats([sample])
        assert stats.boundaries_total == 2
        assert stats.word_interior == 1
        assert stats.fraction == 0.5

    def test_fim_corpus_has_two_boundaries_per_doc(self, byte_vocab):
        docs = [
            Document(f"d{i}", synth_code_text(random.Random(i), 300).encode())
            for i in range(25)
        ]
        samples = list(process_corpus(byte_vocab, docs, seed=0, pipeline="fim"))
        stats = subtoken_stats(samples)
        assert stats.boundaries_total == 2 * len(docs)

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            subtoken_stats([])


class TestCorpusProcessing:
    def test_short_docs_skipped(self, byte_vocab):
        docs = [Document("tiny", b"ab"), Document("ok", b"abcdefgh")]
        samples = list(process_corpus(byte_vocab, docs, seed=1, pipeline="fim"))
        assert [s.doc_id for s in samples] == ["ok"]

    def test_deterministic_per_doc_seeds(self, byte_vocab):
        docs = [
            Document(f"d{i}", synth_code_text(random.Random(i), 300).encode())
            for i in range(5)
        ]
        a = list(process_corpus(byte_vocab, docs, seed=42))
        b = list(process_corpus(byte_vocab, docs, seed=42))
        assert a == b
        # doc order must not matter for per-doc results
        c = {s.doc_id: s for s in process_corpus(byte_vocab, list(reversed(docs)), seed=42)}
        assert all(c[s.doc_id] == s for s in a)

    def test_write_shards(self, byte_vocab, tmp_path):
        docs = [Document("a", b"hello world"), Document("b", b"goodbye moon")]
        samples = list(process_corpus(byte_vocab, docs, seed=3, pipeline="fragment"))
        path = tmp_path / "shards.jsonl"
        assert write_shards(samples, path) == 2
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 2
