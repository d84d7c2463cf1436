"""Corpus ingestion: tokenization, vocabulary pruning, BoW vectorization, splits.

Input is JSONL with one document per line carrying either raw "text" or
pre-tokenized "tokens", plus optional "labels", "authors", and a dense
"features" vector. The reserved label string "no-label" is rejected at
ingestion because the alignment layer gives it special meaning.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

RESERVED_LABEL = "no-label"

# maximal runs of Unicode alphanumerics (underscore excluded), lowercased
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text):
    return _TOKEN_RE.findall(text.lower())


def default_stopwords():
    """The stopword list shipped with the package."""
    text = resources.files("topicalign").joinpath("data/stopwords_en.txt").read_text("utf-8")
    return {w for w in text.split() if w}


@dataclass
class Document:
    id: str
    tokens: list
    labels: set = field(default_factory=set)
    authors: set = field(default_factory=set)
    dense_features: np.ndarray | None = None


@dataclass
class Vocabulary:
    words: list
    doc_frequency: list

    def __post_init__(self):
        self.index = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise ValueError("vocabulary contains duplicate words")

    def __len__(self):
        return len(self.words)


@dataclass
class AuthorVocabulary:
    authors: list

    def __post_init__(self):
        self.index = {a: i for i, a in enumerate(self.authors)}
        if len(self.index) != len(self.authors):
            raise ValueError("author vocabulary contains duplicates")

    def __len__(self):
        return len(self.authors)


@dataclass
class BowDoc:
    id: str
    idx: np.ndarray  # strictly increasing vocab indices
    cnt: np.ndarray  # positive integer counts, parallel to idx
    author_ids: np.ndarray  # indices into AuthorVocabulary
    labels: set
    dense_features: np.ndarray | None = None

    @property
    def n_tokens(self):
        return int(self.cnt.sum())

    def dense_counts(self, vocab_size):
        x = np.zeros(vocab_size)
        x[self.idx] = self.cnt
        return x

    def author_multihot(self, n_authors):
        a = np.zeros(n_authors)
        a[self.author_ids] = 1.0
        return a


@dataclass
class BowCorpus:
    docs: list
    n_words: int
    n_authors: int
    warnings: list = field(default_factory=list)

    def __len__(self):
        return len(self.docs)

    def __iter__(self):
        return iter(self.docs)


def read_documents(path):
    """Load a JSONL corpus. Accepts "text" or "tokens"; validates ids and labels."""
    docs = []
    seen = set()
    feat_dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            if "id" not in rec:
                raise ValueError(f"{path}:{lineno}: missing 'id'")
            doc_id = str(rec["id"])
            if doc_id in seen:
                raise ValueError(f"{path}:{lineno}: duplicate document id {doc_id!r}")
            seen.add(doc_id)
            if "tokens" in rec:
                tokens = [str(t) for t in rec["tokens"]]
            elif "text" in rec:
                tokens = tokenize(rec["text"])
            else:
                raise ValueError(f"{path}:{lineno}: need 'text' or 'tokens'")
            labels = {str(x) for x in rec.get("labels", [])}
            if RESERVED_LABEL in labels:
                raise ValueError(
                    f"{path}:{lineno}: label {RESERVED_LABEL!r} is reserved for unlabeled topics"
                )
            authors = {str(x) for x in rec.get("authors", [])}
            feats = rec.get("features")
            if feats is not None:
                feats = np.asarray(feats, dtype=np.float64)
                if feat_dim is None:
                    feat_dim = feats.size
                elif feats.size != feat_dim:
                    raise ValueError(
                        f"{path}:{lineno}: feature length {feats.size} != expected {feat_dim}"
                    )
            docs.append(Document(doc_id, tokens, labels, authors, feats))
    return docs


def build_vocabulary(docs, max_doc_frac=0.85, min_doc_count=30, stopwords=frozenset()):
    """Keep non-stopwords with doc frequency in [min_doc_count, max_doc_frac * N]."""
    if not (0.0 < max_doc_frac <= 1.0):
        raise ValueError("max_doc_frac must be in (0, 1]")
    if min_doc_count < 0:
        raise ValueError("min_doc_count must be >= 0")
    df = Counter()
    for doc in docs:
        df.update(set(doc.tokens))
    ceiling = max_doc_frac * len(docs)
    kept = sorted(
        w for w, n in df.items() if w not in stopwords and n <= ceiling and n >= min_doc_count
    )
    if not kept:
        raise ValueError("pruning removed every word; relax the thresholds")
    return Vocabulary(kept, [df[w] for w in kept])


def build_author_vocabulary(docs):
    names = sorted({a for doc in docs for a in doc.authors})
    return AuthorVocabulary(names)


def vectorize(docs, vocab, authors):
    """BoW counts over vocab plus author ids; OOV-only docs kept with a warning."""
    if len(vocab) == 0:
        raise ValueError("empty vocabulary")
    out = []
    warnings = []
    for doc in docs:
        counts = Counter(vocab.index[t] for t in doc.tokens if t in vocab.index)
        idx = np.array(sorted(counts), dtype=np.int64)
        cnt = np.array([counts[i] for i in idx], dtype=np.int64)
        if doc.tokens and idx.size == 0:
            warnings.append(f"document {doc.id!r} has no in-vocabulary tokens")
        a_ids = np.array(sorted(authors.index[a] for a in doc.authors if a in authors.index), dtype=np.int64)
        out.append(BowDoc(doc.id, idx, cnt, a_ids, set(doc.labels), doc.dense_features))
    return BowCorpus(out, len(vocab), len(authors), warnings)


def split_corpus(corpus, ratios=(0.70, 0.15, 0.15), seed=0):
    """Shuffled train/val/test partition; sizes by floor-then-distribute."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError("ratios must be three positive reals")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    n = len(corpus)
    if n < 3:
        raise ValueError("need at least 3 documents to split")
    sizes = [int(np.floor(n * r)) for r in ratios]
    remainders = [n * r - s for r, s in zip(ratios, sizes)]
    # hand leftover docs to the largest fractional remainders, earlier split on ties
    for _ in range(n - sum(sizes)):
        i = int(np.argmax(remainders))
        sizes[i] += 1
        remainders[i] = -1.0
    order = np.random.default_rng(seed).permutation(n)
    parts = []
    start = 0
    for s in sizes:
        chosen = sorted(order[start : start + s])
        parts.append(BowCorpus([corpus.docs[i] for i in chosen], corpus.n_words, corpus.n_authors))
        start += s
    return tuple(parts)


def load_word_embeddings(path, vocab, dim=None, seed=0):
    """Word vectors from "word v1 ... vd" text; missing words get seeded uniforms."""
    table = {}
    d = dim
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            word, vals = parts[0], parts[1:]
            if d is None:
                d = len(vals)
            elif len(vals) != d:
                raise ValueError(f"{path}:{lineno}: dimension {len(vals)} != expected {d}")
            table[word] = np.asarray(vals, dtype=np.float64)
    if d is None:
        raise ValueError(f"{path}: no embedding rows found")
    rng = np.random.default_rng(seed)
    out = np.empty((len(vocab), d))
    for i, w in enumerate(vocab.words):
        if w in table:
            out[i] = table[w]
        else:
            out[i] = rng.uniform(-0.05, 0.05, size=d)
    return out


# ---- persistence ----------------------------------------------------------


def save_vocabulary(vocab, path):
    with open(path, "w", encoding="utf-8") as fh:
        for w, n in zip(vocab.words, vocab.doc_frequency):
            fh.write(f"{w}\t{n}\n")


def load_vocabulary(path):
    words, freqs = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                w, n = line.split("\t")
            except ValueError:
                raise ValueError(f"{path}:{lineno}: expected word<TAB>doc_frequency") from None
            words.append(w)
            freqs.append(int(n))
    return Vocabulary(words, freqs)


def save_bow_corpus(corpus, path):
    """Sparse JSONL: {"id", "idx", "cnt", "auth", "labels"} (+"feat" when present)."""
    with open(path, "w", encoding="utf-8") as fh:
        header = {"format": "bow-corpus", "version": 1, "n_words": corpus.n_words, "n_authors": corpus.n_authors}
        fh.write(json.dumps(header) + "\n")
        for doc in corpus.docs:
            rec = {
                "id": doc.id,
                "idx": doc.idx.tolist(),
                "cnt": doc.cnt.tolist(),
                "auth": doc.author_ids.tolist(),
                "labels": sorted(doc.labels),
            }
            if doc.dense_features is not None:
                rec["feat"] = doc.dense_features.tolist()
            fh.write(json.dumps(rec) + "\n")


def load_bow_corpus(path):
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != "bow-corpus":
            raise ValueError(f"{path}: not a bow-corpus file")
        if header.get("version") != 1:
            raise ValueError(f"{path}: unsupported version {header.get('version')!r}")
        docs = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            feats = rec.get("feat")
            docs.append(
                BowDoc(
                    rec["id"],
                    np.asarray(rec["idx"], dtype=np.int64),
                    np.asarray(rec["cnt"], dtype=np.int64),
                    np.asarray(rec["auth"], dtype=np.int64),
                    set(rec["labels"]),
                    None if feats is None else np.asarray(feats, dtype=np.float64),
                )
            )
    return BowCorpus(docs, header["n_words"], header["n_authors"])
