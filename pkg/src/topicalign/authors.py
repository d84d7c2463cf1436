"""Author-side analysis of a trained model: the topic-author matrix, author
similarity, per-topic author rankings, label recommendations, and the
shared word/topic/author embedding export.

Author-topic vectors are the renormalized columns of the topic-author
matrix. The shared embedding export requires the embedding decoder for
both words and authors; factorizing the author decoder through the topic
embedding space is this library's construction (the dual-decoder variants
keep a plain linear author head).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .align import RESERVED_LABEL, TopicLabelVector
from .corpus import AuthorVocabulary, Vocabulary
from .model import TopicModel


@dataclass
class AuthorTopicMatrix:
    """psi: K x |A|, each row a probability vector over authors."""

    psi: np.ndarray

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=np.float64)
        if self.psi.ndim != 2:
            raise ValueError("psi must be a 2-d topics-by-authors matrix")

    @property
    def n_topics(self):
        return self.psi.shape[0]

    @property
    def n_authors(self):
        return self.psi.shape[1]

    def author_vector(self, author):
        """The author's distribution over topics: psi column, renormalized."""
        col = self.psi[:, author]
        total = col.sum()
        if total <= 0.0:
            raise ValueError(f"author {author} has zero topic mass")
        return col / total


def extract_author_topics(model: TopicModel) -> AuthorTopicMatrix:
    """Eval-mode softmax response of the author decoder to each one-hot topic."""
    return AuthorTopicMatrix(model.topic_author_matrix())


def author_similarity(m: AuthorTopicMatrix, i, j):
    """Cosine similarity of two author-topic vectors; in [0, 1] since the
    vectors are nonnegative."""
    a, b = m.author_vector(i), m.author_vector(j)
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def author_similarity_matrix(m: AuthorTopicMatrix):
    vecs = np.stack([m.author_vector(i) for i in range(m.n_authors)])
    norms = np.linalg.norm(vecs, axis=1)
    return (vecs @ vecs.T) / np.outer(norms, norms)


def top_authors(m: AuthorTopicMatrix, topic, n):
    """Top-n authors for a topic, descending mass, ties by ascending index."""
    if n > m.n_authors:
        raise ValueError(f"n={n} exceeds author count {m.n_authors}")
    order = np.argsort(-m.psi[topic], kind="stable")
    return order[:n]


def recommend_labels(m: AuthorTopicMatrix, topic_labels: TopicLabelVector, truth):
    """Recommend for each author the label with maximal summed mass in the
    author's topic vector; returns (accuracy over the truth map, per-author
    recommendations)."""
    if len(topic_labels) != m.n_topics:
        raise ValueError("topic-label vector length does not match psi")
    if not truth:
        raise ValueError("truth map is empty")
    for author, label in truth.items():
        if label not in topic_labels.label_set:
            raise ValueError(f"truth label {label!r} for author {author} is unknown")
    labels = sorted(topic_labels.label_set)
    if not labels:
        raise ValueError("topic-label vector carries no labels")
    masks = np.stack(
        [[e == lab for e in topic_labels.entries] for lab in labels]
    ).astype(float)
    recs = []
    for a in range(m.n_authors):
        mass = masks @ m.author_vector(a)
        # argmax on the sorted label list makes ties lexicographic
        recs.append(labels[int(np.argmax(mass))])
    hits = sum(1 for a, lab in truth.items() if recs[a] == lab)
    return hits / len(truth), recs


def _clean(name):
    if "\t" in name or "\n" in name:
        raise ValueError(f"name {name!r} contains tab or newline")
    return name


def export_embeddings(
    model: TopicModel,
    vocab: Vocabulary,
    authors: AuthorVocabulary,
    topic_labels: TopicLabelVector,
    path,
):
    """Write the shared embedding space as TSV: kind, name, label (topics
    only), then the embedding values. Rows cover all words, topics, and
    authors."""
    if model.topic_embed is None or model.word_embed is None:
        raise ValueError(f"variant {model.variant!r} has no embedding decoder")
    if model.author_embed is None:
        raise ValueError("model has no author embeddings (trained without authors)")
    if len(vocab) != model.n_words or len(authors) != model.n_authors:
        raise ValueError("vocabulary sizes do not match the model")
    if len(topic_labels) != model.n_topics:
        raise ValueError("topic-label vector length does not match the model")

    def rows():
        for w, vec in zip(vocab.words, model.word_embed.data):
            yield "word", _clean(w), "", vec
        for k, vec in enumerate(model.topic_embed.data):
            yield "topic", f"topic{k}", _clean(topic_labels.entries[k]), vec
        for a, vec in zip(authors.authors, model.author_embed.data):
            yield "author", _clean(a), "", vec

    with open(path, "w", encoding="utf-8") as fh:
        dim = model.embed_dim
        fh.write("\t".join(["kind", "name", "label"] + [f"e{i}" for i in range(dim)]) + "\n")
        for kind, name, label, vec in rows():
            fh.write("\t".join([kind, name, label] + [repr(float(v)) for v in vec]) + "\n")


def export_similarity_csv(m: AuthorTopicMatrix, authors: AuthorVocabulary, path):
    """Author-by-author cosine similarity matrix with names on both axes."""
    if len(authors) != m.n_authors:
        raise ValueError("author vocabulary does not match psi")
    sim = author_similarity_matrix(m)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + list(authors.authors))
        for name, row in zip(authors.authors, sim):
            writer.writerow([name] + [f"{v:.12g}" for v in row])
