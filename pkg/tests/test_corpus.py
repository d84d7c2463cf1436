"""Corpus ingestion, vocabulary pruning, vectorization, and split tests."""

import json

import numpy as np
import pytest

from topicalign import corpus as cp


def make_docs(token_lists, **kw):
    return [cp.Document(f"d{i}", toks, **kw) for i, toks in enumerate(token_lists)]


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


class TestTokenize:
    def test_lowercases_and_splits_on_nonalnum(self):
        assert cp.tokenize("The cat, the CAT!") == ["the", "cat", "the", "cat"]

    def test_unicode_and_digits(self):
        assert cp.tokenize("Köln 2024 re-elect") == ["köln", "2024", "re", "elect"]

    def test_underscore_is_a_separator(self):
        assert cp.tokenize("snake_case") == ["snake", "case"]


class TestReadDocuments:
    def test_text_and_tokens_paths(self, tmp_path):
        p = tmp_path / "c.jsonl"
        write_jsonl(
            p,
            [
                {"id": "a", "text": "Cats and dogs."},
                {"id": "b", "tokens": ["Cats", "dogs"], "labels": ["pets"], "authors": ["x"]},
            ],
        )
        docs = cp.read_documents(p)
        assert docs[0].tokens == ["cats", "and", "dogs"]
        assert docs[1].tokens == ["Cats", "dogs"]  # pre-tokenized input is verbatim
        assert docs[1].labels == {"pets"} and docs[1].authors == {"x"}

    def test_duplicate_id_rejected(self, tmp_path):
        p = tmp_path / "c.jsonl"
        write_jsonl(p, [{"id": "a", "text": "x"}, {"id": "a", "text": "y"}])
        with pytest.raises(ValueError, match="duplicate"):
            cp.read_documents(p)

    def test_reserved_label_rejected(self, tmp_path):
        p = tmp_path / "c.jsonl"
        write_jsonl(p, [{"id": "a", "text": "x", "labels": ["no-label"]}])
        with pytest.raises(ValueError, match="reserved"):
            cp.read_documents(p)

    def test_feature_length_must_be_consistent(self, tmp_path):
        p = tmp_path / "c.jsonl"
        write_jsonl(
            p,
            [
                {"id": "a", "text": "x", "features": [1.0, 2.0]},
                {"id": "b", "text": "y", "features": [1.0]},
            ],
        )
        with pytest.raises(ValueError, match="feature length"):
            cp.read_documents(p)

    def test_missing_text_and_tokens(self, tmp_path):
        p = tmp_path / "c.jsonl"
        write_jsonl(p, [{"id": "a"}])
        with pytest.raises(ValueError, match="text"):
            cp.read_documents(p)


class TestBuildVocabulary:
    def test_frequent_word_excluded(self):
        docs = make_docs([["common", f"rare{i}"] for i in range(90)] + [[f"rare{i}"] for i in range(90, 100)])
        vocab = cp.build_vocabulary(docs, max_doc_frac=0.85, min_doc_count=0)
        assert "common" not in vocab.index  # 90 of 100 docs > 85

    def test_rare_word_excluded(self):
        docs = make_docs([["filler", "almost"] if i < 29 else ["filler"] for i in range(100)])
        vocab = cp.build_vocabulary(docs, max_doc_frac=1.0, min_doc_count=30)
        assert "almost" not in vocab.index  # 29 docs < 30
        assert "filler" in vocab.index

    def test_no_pruning_keeps_all_distinct_words(self):
        docs = make_docs([["a", "b", "b"], ["c"]])
        vocab = cp.build_vocabulary(docs, max_doc_frac=1.0, min_doc_count=0)
        assert vocab.words == ["a", "b", "c"]

    def test_stopwords_removed(self):
        docs = make_docs([["the", "cat"], ["the", "dog"]])
        vocab = cp.build_vocabulary(docs, 1.0, 0, stopwords={"the"})
        assert vocab.words == ["cat", "dog"]

    def test_lexicographic_order_and_frequencies(self):
        docs = make_docs([["b", "a"], ["b"]])
        vocab = cp.build_vocabulary(docs, 1.0, 0)
        assert vocab.words == ["a", "b"]
        assert vocab.doc_frequency == [1, 2]

    def test_empty_vocabulary_is_an_error(self):
        docs = make_docs([["a"], ["b"]])
        with pytest.raises(ValueError, match="pruning"):
            cp.build_vocabulary(docs, 1.0, 5)

    def test_raising_min_count_never_adds_words(self):
        rng = np.random.default_rng(0)
        words = [f"w{i}" for i in range(30)]
        docs = make_docs([[words[j] for j in rng.integers(0, 30, size=8)] for _ in range(50)])
        prev = None
        for mc in (0, 2, 5, 10):
            kept = set(cp.build_vocabulary(docs, 1.0, mc).words)
            if prev is not None:
                assert kept <= prev
            prev = kept

    def test_default_stopword_list_loads(self):
        sw = cp.default_stopwords()
        assert "the" in sw and len(sw) > 100


class TestVectorize:
    def setup_method(self):
        self.vocab = cp.Vocabulary(["cat", "dog", "fish"], [1, 1, 1])
        self.authors = cp.AuthorVocabulary(["A1", "A2"])

    def test_hand_counts(self):
        docs = [cp.Document("d", ["cat", "cat", "dog"])]
        bow = cp.vectorize(docs, self.vocab, self.authors)
        np.testing.assert_array_equal(bow.docs[0].dense_counts(3), [2, 1, 0])

    def test_empty_tokens_zero_vector(self):
        bow = cp.vectorize([cp.Document("d", [])], self.vocab, self.authors)
        np.testing.assert_array_equal(bow.docs[0].dense_counts(3), [0, 0, 0])
        assert bow.warnings == []  # genuinely empty docs are not OOV casualties

    def test_author_multihot(self):
        bow = cp.vectorize([cp.Document("d", ["cat"], authors={"A2"})], self.vocab, self.authors)
        np.testing.assert_array_equal(bow.docs[0].author_multihot(2), [0, 1])

    def test_oov_only_doc_kept_with_warning(self):
        bow = cp.vectorize([cp.Document("d", ["zebra"])], self.vocab, self.authors)
        assert len(bow.docs) == 1
        assert bow.docs[0].idx.size == 0
        assert any("d" in w for w in bow.warnings)

    def test_roundtrip_token_counts(self):
        rng = np.random.default_rng(1)
        words = ["cat", "dog", "fish", "zebra"]
        docs = make_docs([[words[j] for j in rng.integers(0, 4, size=20)] for _ in range(30)])
        bow = cp.vectorize(docs, self.vocab, self.authors)
        total = np.zeros(3)
        for d in bow.docs:
            total += d.dense_counts(3)
        for w, i in self.vocab.index.items():
            expected = sum(d.tokens.count(w) for d in docs)
            assert total[i] == expected

    def test_indices_strictly_increasing(self):
        bow = cp.vectorize([cp.Document("d", ["fish", "cat", "fish"])], self.vocab, self.authors)
        d = bow.docs[0]
        assert np.all(np.diff(d.idx) > 0)
        np.testing.assert_array_equal(d.cnt, [1, 2])


class TestSplitCorpus:
    def make_corpus(self, n):
        docs = [cp.BowDoc(f"d{i}", np.array([0]), np.array([1]), np.array([], dtype=np.int64), set()) for i in range(n)]
        return cp.BowCorpus(docs, 1, 0)

    def test_100_docs_70_15_15(self):
        tr, va, te = cp.split_corpus(self.make_corpus(100), (0.70, 0.15, 0.15), seed=3)
        assert (len(tr), len(va), len(te)) == (70, 15, 15)

    def test_same_seed_same_partition(self):
        c = self.make_corpus(37)
        a = cp.split_corpus(c, seed=5)
        b = cp.split_corpus(c, seed=5)
        for x, y in zip(a, b):
            assert [d.id for d in x.docs] == [d.id for d in y.docs]

    def test_floor_then_distribute(self):
        tr, va, te = cp.split_corpus(self.make_corpus(10), (0.70, 0.15, 0.15), seed=0)
        assert len(tr) + len(va) + len(te) == 10
        assert (len(tr), len(va), len(te)) == (7, 2, 1)

    def test_partition_disjoint_and_complete(self):
        c = self.make_corpus(53)
        parts = cp.split_corpus(c, seed=11)
        ids = [d.id for p in parts for d in p.docs]
        assert len(ids) == 53 and len(set(ids)) == 53

    def test_too_small_corpus(self):
        with pytest.raises(ValueError, match="at least 3"):
            cp.split_corpus(self.make_corpus(2))

    def test_bad_ratios(self):
        with pytest.raises(ValueError, match="sum to 1"):
            cp.split_corpus(self.make_corpus(10), (0.5, 0.25, 0.35))


class TestWordEmbeddings:
    def test_all_words_present(self, tmp_path):
        vocab = cp.Vocabulary(["a", "b"], [1, 1])
        p = tmp_path / "vec.txt"
        p.write_text("a 1.0 2.0 3.0\nb 4.0 5.0 6.0\n")
        m = cp.load_word_embeddings(p, vocab)
        np.testing.assert_array_equal(m, [[1, 2, 3], [4, 5, 6]])

    def test_missing_word_seeded_fallback(self, tmp_path):
        vocab = cp.Vocabulary(["a", "zzz"], [1, 1])
        p = tmp_path / "vec.txt"
        p.write_text("a 1.0 2.0\n")
        m1 = cp.load_word_embeddings(p, vocab, seed=7)
        m2 = cp.load_word_embeddings(p, vocab, seed=7)
        np.testing.assert_array_equal(m1, m2)
        assert np.all(np.abs(m1[1]) <= 0.05)

    def test_inconsistent_dimension(self, tmp_path):
        p = tmp_path / "vec.txt"
        p.write_text("a 1.0 2.0\nb 1.0\n")
        with pytest.raises(ValueError, match="dimension"):
            cp.load_word_embeddings(p, cp.Vocabulary(["a"], [1]))

    def test_empty_vocab_empty_matrix(self, tmp_path):
        p = tmp_path / "vec.txt"
        p.write_text("a 1.0 2.0\n")
        m = cp.load_word_embeddings(p, cp.Vocabulary([], []))
        assert m.shape == (0, 2)


class TestPersistence:
    def test_vocabulary_tsv_roundtrip(self, tmp_path):
        vocab = cp.Vocabulary(["cat", "dog"], [5, 7])
        p = tmp_path / "vocab.tsv"
        cp.save_vocabulary(vocab, p)
        back = cp.load_vocabulary(p)
        assert back.words == vocab.words and back.doc_frequency == [5, 7]

    def test_bow_corpus_jsonl_roundtrip(self, tmp_path):
        docs = [
            cp.BowDoc("a", np.array([0, 2]), np.array([2, 1]), np.array([1]), {"x"}, np.array([0.5, -1.0])),
            cp.BowDoc("b", np.array([], dtype=np.int64), np.array([], dtype=np.int64), np.array([], dtype=np.int64), set()),
        ]
        corp = cp.BowCorpus(docs, 3, 2)
        p = tmp_path / "corpus.bin"
        cp.save_bow_corpus(corp, p)
        back = cp.load_bow_corpus(p)
        assert back.n_words == 3 and back.n_authors == 2
        assert back.docs[0].id == "a" and back.docs[0].labels == {"x"}
        np.testing.assert_array_equal(back.docs[0].idx, [0, 2])
        np.testing.assert_array_equal(back.docs[0].cnt, [2, 1])
        np.testing.assert_array_equal(back.docs[0].dense_features, [0.5, -1.0])
        assert back.docs[1].dense_features is None
        assert back.docs[1].idx.size == 0

    def test_wrong_format_rejected(self, tmp_path):
        p = tmp_path / "corpus.bin"
        p.write_text('{"format": "other", "version": 1}\n')
        with pytest.raises(ValueError, match="not a bow-corpus"):
            cp.load_bow_corpus(p)
