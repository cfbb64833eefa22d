import json

import numpy as np
import pytest

from hierattn.corpus import (
    PAD,
    UNK,
    Document,
    build_vocabulary,
    encode_batch,
    encode_document,
    level_targets,
    load_corpus,
    load_embeddings,
    random_embeddings,
    save_corpus,
)
from hierattn.errors import (
    DimMismatch,
    DuplicateIdError,
    EmptyCorpus,
    ParseError,
    UnknownLabelError,
)
from hierattn.hierarchy import build_hierarchy


@pytest.fixture
def hier():
    return build_hierarchy([("root", "A"), ("root", "C"), ("A", "B")])


def write_corpus(tmp_path, lines):
    path = tmp_path / "corpus.jsonl"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class TestLoadCorpus:
    def test_closure_on_load(self, tmp_path, hier):
        path = write_corpus(tmp_path, [
            json.dumps({"id": "d1", "tokens": ["a", "b"], "labels": ["B"]}),
        ])
        docs = load_corpus(path, hier)
        assert docs[0].labels == {"A", "B"}

    def test_malformed_line_names_line(self, tmp_path, hier):
        path = write_corpus(tmp_path, [
            json.dumps({"id": "d1", "tokens": ["a"], "labels": []}),
            "{not json",
        ])
        with pytest.raises(ParseError, match=":2"):
            load_corpus(path, hier)

    def test_unknown_label(self, tmp_path, hier):
        path = write_corpus(tmp_path, [
            json.dumps({"id": "d1", "tokens": ["a"], "labels": ["Z"]}),
        ])
        with pytest.raises(UnknownLabelError):
            load_corpus(path, hier)

    def test_duplicate_id(self, tmp_path, hier):
        rec = json.dumps({"id": "d1", "tokens": ["a"], "labels": []})
        path = write_corpus(tmp_path, [rec, rec])
        with pytest.raises(DuplicateIdError):
            load_corpus(path, hier)

    def test_empty_tokens_rejected(self, tmp_path, hier):
        path = write_corpus(tmp_path, [
            json.dumps({"id": "d1", "tokens": [], "labels": []}),
        ])
        with pytest.raises(ParseError):
            load_corpus(path, hier)

    def test_save_round_trip(self, tmp_path, hier):
        docs = [Document(id="d1", tokens=("x", "y"), labels=frozenset({"A", "B"}))]
        path = tmp_path / "out.jsonl"
        save_corpus(docs, path)
        assert load_corpus(path, hier) == docs


class TestBuildVocabulary:
    def test_min_count_filters(self):
        docs = [
            Document(id="1", tokens=("a", "a", "a", "b"), labels=frozenset()),
        ]
        vocab = build_vocabulary(docs, min_count=2)
        assert vocab.size == 3  # PAD, UNK, a
        assert vocab.encode("a") == 2
        assert vocab.encode("b") == UNK

    def test_min_count_one_keeps_all(self):
        docs = [Document(id="1", tokens=("a", "b"), labels=frozenset())]
        vocab = build_vocabulary(docs, min_count=1)
        assert {vocab.encode("a"), vocab.encode("b")} == {2, 3}

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            build_vocabulary([])

    def test_frequency_then_lexicographic_order(self):
        docs = [Document(id="1", tokens=("b", "b", "c", "a", "a"), labels=frozenset())]
        vocab = build_vocabulary(docs)
        # a and b tie at 2 occurrences; a wins lexicographically; c is rarest
        assert vocab.encode("a") == 2
        assert vocab.encode("b") == 3
        assert vocab.encode("c") == 4

    def test_stable_across_runs(self):
        docs = [Document(id="1", tokens=("x", "y", "x"), labels=frozenset())]
        assert build_vocabulary(docs).index == build_vocabulary(docs).index


class TestEmbeddings:
    def test_file_vector_taken(self, tmp_path):
        docs = [Document(id="1", tokens=("a", "b"), labels=frozenset())]
        vocab = build_vocabulary(docs)
        path = tmp_path / "vec.txt"
        path.write_text("a 1.0 0.0\n", encoding="utf-8")
        table = load_embeddings(path, vocab, 2, seed=0)
        np.testing.assert_array_equal(table.vectors[vocab.encode("a")], [1.0, 0.0])

    def test_missing_token_gets_seeded_random_row(self, tmp_path):
        docs = [Document(id="1", tokens=("a", "b"), labels=frozenset())]
        vocab = build_vocabulary(docs)
        path = tmp_path / "vec.txt"
        path.write_text("a 1.0 0.0\n", encoding="utf-8")
        t1 = load_embeddings(path, vocab, 2, seed=5)
        t2 = load_embeddings(path, vocab, 2, seed=5)
        row = t1.vectors[vocab.encode("b")]
        assert (np.abs(row) <= 0.1).all() and row.any()
        np.testing.assert_array_equal(t1.vectors, t2.vectors)

    def test_dim_mismatch(self, tmp_path):
        docs = [Document(id="1", tokens=("a",), labels=frozenset())]
        vocab = build_vocabulary(docs)
        path = tmp_path / "vec.txt"
        path.write_text("a 1.0 2.0 3.0\n", encoding="utf-8")
        with pytest.raises(DimMismatch):
            load_embeddings(path, vocab, 2)

    def test_header_line_skipped(self, tmp_path):
        docs = [Document(id="1", tokens=("a",), labels=frozenset())]
        vocab = build_vocabulary(docs)
        path = tmp_path / "vec.txt"
        path.write_text("1 2\na 0.5 0.5\n", encoding="utf-8")
        table = load_embeddings(path, vocab, 2)
        np.testing.assert_array_equal(table.vectors[vocab.encode("a")], [0.5, 0.5])

    def test_pad_row_zero(self):
        docs = [Document(id="1", tokens=("a",), labels=frozenset())]
        vocab = build_vocabulary(docs)
        table = random_embeddings(vocab, 4, seed=1)
        assert (table.vectors[PAD] == 0).all()


class TestEncodeBatch:
    def docs(self):
        return [
            Document(id="1", tokens=("a", "b", "c"), labels=frozenset({"A", "B"})),
            Document(id="2", tokens=tuple("abcdefg"), labels=frozenset({"C"})),
        ]

    def vocab(self):
        return build_vocabulary(self.docs())

    def test_padding_and_mask(self, hier):
        batch = encode_batch(self.docs(), self.vocab(), hier, max_len=5)
        np.testing.assert_array_equal(batch.mask[0], [1, 1, 1, 0, 0])
        assert (batch.token_ids[0][3:] == PAD).all()

    def test_truncation_keeps_head(self, hier):
        batch = encode_batch(self.docs(), self.vocab(), hier, max_len=5)
        np.testing.assert_array_equal(batch.mask[1], [1, 1, 1, 1, 1])
        expected = [self.vocab().encode(t) for t in "abcde"]
        np.testing.assert_array_equal(batch.token_ids[1], expected)

    def test_level_targets(self, hier):
        batch = encode_batch(self.docs(), self.vocab(), hier, max_len=4)
        # level 1 order (A, C); level 2 order (B,)
        np.testing.assert_array_equal(batch.targets[0], [[1, 0], [0, 1]])
        np.testing.assert_array_equal(batch.targets[1], [[1], [0]])

    def test_target_parent_consistency(self, hier):
        rng = np.random.default_rng(0)
        hier2 = build_hierarchy(
            [("root", "A"), ("root", "B"), ("A", "C"), ("A", "D"), ("B", "E")]
        )
        leaves = ["C", "D", "E", "A", "B"]
        docs = [
            Document(
                id=str(i),
                tokens=("t",),
                labels=frozenset({leaves[rng.integers(len(leaves))]}),
            )
            for i in range(20)
        ]
        from hierattn.hierarchy import ancestor_closure

        docs = [
            Document(d.id, d.tokens, ancestor_closure(d.labels, hier2)) for d in docs
        ]
        batch = encode_batch(docs, build_vocabulary(docs), hier2, max_len=2)
        lvl1 = {l: i for i, l in enumerate(hier2.labels_at_level(1))}
        for row in range(20):
            for j, label in enumerate(hier2.labels_at_level(2)):
                if batch.targets[1][row, j] == 1:
                    assert batch.targets[0][row, lvl1[hier2.parent[label]]] == 1

    def test_pure_function(self, hier):
        b1 = encode_batch(self.docs(), self.vocab(), hier, max_len=6)
        b2 = encode_batch(self.docs(), self.vocab(), hier, max_len=6)
        np.testing.assert_array_equal(b1.token_ids, b2.token_ids)
        np.testing.assert_array_equal(b1.mask, b2.mask)
        for t1, t2 in zip(b1.targets, b2.targets):
            np.testing.assert_array_equal(t1, t2)

    def test_oov_maps_to_unk(self, hier):
        doc = Document(id="q", tokens=("zzz",), labels=frozenset())
        ids, mask = encode_document(doc, self.vocab(), 4)
        assert ids.tolist() == [UNK]

    def test_level_targets_helper(self, hier):
        doc = Document(id="1", tokens=("a",), labels=frozenset({"A", "B"}))
        z = level_targets(doc, hier)
        np.testing.assert_array_equal(z[0], [1, 0])
        np.testing.assert_array_equal(z[1], [1])
