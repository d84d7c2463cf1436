"""Topic and clustering metrics: top words, NPMI coherence, diversity,
quality, purity, NMI, posterior-based label prediction, and Welch's
two-tailed t-test.

Coherence uses boolean whole-document co-occurrence over a reference
corpus with count smoothing eps=1e-12. Words missing from the reference
skip their pairs; callers can collect the skip statistics. All functions
are pure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .align import RESERVED_LABEL, TopicLabelVector
from .corpus import BowCorpus

DEFAULT_TOP_N = 25
_EPS = 1e-12


def top_words(topic_word, n):
    """Per-topic top-n word indices, descending probability, ties broken
    by ascending word index."""
    tw = np.atleast_2d(np.asarray(topic_word, dtype=np.float64))
    if n > tw.shape[1]:
        raise ValueError(f"n={n} exceeds vocabulary size {tw.shape[1]}")
    out = []
    for row in tw:
        # stable mergesort on -p keeps equal-probability words in index order
        order = np.argsort(-row, kind="stable")
        out.append(order[:n])
    return out


def diversity(top):
    """Fraction of distinct words across all top-word lists."""
    if not top or any(len(t) < 1 for t in top):
        raise ValueError("need at least one word per topic")
    total = sum(len(t) for t in top)
    distinct = {int(w) for t in top for w in t}
    return len(distinct) / total


def quality(tc, td):
    return tc * td


def coherence_npmi(top, reference: BowCorpus, window=None, stats=None):
    """Mean over topics of mean pairwise NPMI of their top words.

    Co-occurrence is boolean at document level by default. Passing an
    integer window requires token sequences instead of bag-of-words input
    and is handled by callers that retain token order; this function
    covers the whole-document default.
    """
    if window is not None:
        raise NotImplementedError("sliding-window co-occurrence needs token sequences")
    if len(reference) == 0:
        raise ValueError("reference corpus is empty")
    needed = sorted({int(w) for t in top for w in t})
    col = {w: i for i, w in enumerate(needed)}
    presence = np.zeros((len(reference), len(needed)), dtype=bool)
    for r, doc in enumerate(reference):
        for w in doc.idx:
            j = col.get(int(w))
            if j is not None:
                presence[r, j] = True
    n_docs = len(reference)
    word_count = presence.sum(axis=0)

    pairs_total = 0
    pairs_skipped = 0
    per_topic = []
    for t in top:
        vals = []
        idxs = [col[int(w)] for w in t]
        for a in range(len(idxs)):
            for b in range(a + 1, len(idxs)):
                i, j = idxs[a], idxs[b]
                pairs_total += 1
                ni, nj = word_count[i], word_count[j]
                if ni == 0 or nj == 0:
                    pairs_skipped += 1
                    continue
                nij = np.count_nonzero(presence[:, i] & presence[:, j])
                pij = (nij + _EPS) / n_docs
                num = np.log(pij) - np.log(ni / n_docs) - np.log(nj / n_docs)
                vals.append(num / -np.log(pij))
        if vals:
            per_topic.append(float(np.mean(vals)))
    if stats is not None:
        stats["pairs_total"] = pairs_total
        stats["pairs_skipped"] = pairs_skipped
        stats["topics_scored"] = len(per_topic)
    return float(np.mean(per_topic)) if per_topic else 0.0


def _check_paired(doc_topics, labels):
    if len(doc_topics) != len(labels):
        raise ValueError("assignments and labels must have the same length")
    if len(labels) < 1:
        raise ValueError("need at least one document")


def purity(doc_topics, labels):
    """Cluster purity: sum over clusters of the majority label count / N."""
    _check_paired(doc_topics, labels)
    by_cluster = {}
    for a, l in zip(doc_topics, labels):
        by_cluster.setdefault(a, {})
        by_cluster[a][l] = by_cluster[a].get(l, 0) + 1
    hit = 0
    for counts in by_cluster.values():
        # ties resolve toward the lexicographically smallest label
        best = min(counts, key=lambda l: (-counts[l], str(l)))
        hit += counts[best]
    return hit / len(labels)


def nmi(doc_topics, labels):
    """I(C;L) / sqrt(H(C) H(L)) with natural logs; 0 when either entropy
    vanishes."""
    _check_paired(doc_topics, labels)
    n = len(labels)
    cs = sorted({str(a) for a in doc_topics})
    ls = sorted({str(l) for l in labels})
    joint = np.zeros((len(cs), len(ls)))
    ci = {c: i for i, c in enumerate(cs)}
    li = {l: i for i, l in enumerate(ls)}
    for a, l in zip(doc_topics, labels):
        joint[ci[str(a)], li[str(l)]] += 1.0
    p = joint / n
    pc, pl = p.sum(axis=1), p.sum(axis=0)
    hc = -np.sum(pc[pc > 0] * np.log(pc[pc > 0]))
    hl = -np.sum(pl[pl > 0] * np.log(pl[pl > 0]))
    if hc == 0.0 or hl == 0.0:
        return 0.0
    nz = p > 0
    mi = np.sum(p[nz] * np.log(p[nz] / np.outer(pc, pl)[nz]))
    return float(mi / np.sqrt(hc * hl))


def label_predict(theta, topic_labels: TopicLabelVector, truth, ks):
    """Rank labels per document by summed posterior mass over the topics
    carrying each label; returns (top-k accuracy map, macro F1, micro F1
    of the top-1 predictions)."""
    theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
    if theta.shape[1] != len(topic_labels):
        raise ValueError("posterior width does not match the topic-label vector")
    labels = sorted(topic_labels.label_set)
    if not labels:
        raise ValueError("topic-label vector carries no labels")
    for t in truth:
        if t not in topic_labels.label_set:
            raise ValueError(f"truth label {t!r} is not in the topic-label vector")
    if len(truth) != theta.shape[0]:
        raise ValueError("need one truth label per posterior row")

    masks = np.stack(
        [[e == lab for e in topic_labels.entries] for lab in labels]
    ).astype(float)
    mass = theta @ masks.T  # docs x labels
    # descending mass, ties toward the lexicographically smaller label
    # (labels are already sorted, so a stable sort settles ties)
    order = np.argsort(-mass, axis=1, kind="stable")
    ranked = [[labels[j] for j in row] for row in order]

    topk = {}
    for k in ks:
        hits = sum(1 for r, t in zip(ranked, truth) if t in r[:k])
        topk[int(k)] = hits / len(truth)

    pred = [r[0] for r in ranked]
    f1s = []
    tp_total = 0
    for lab in labels:
        tp = sum(1 for p, t in zip(pred, truth) if p == lab and t == lab)
        fp = sum(1 for p, t in zip(pred, truth) if p == lab and t != lab)
        fn = sum(1 for p, t in zip(pred, truth) if p != lab and t == lab)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1s.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
        tp_total += tp
    macro_f1 = float(np.mean(f1s))
    micro_f1 = tp_total / len(truth)
    return topk, macro_f1, micro_f1


def welch_ttest(sample_a, sample_b):
    """Welch's two-tailed t-test; returns (t, p). Zero variance in both
    samples degenerates to p=1 for equal means, p=0 otherwise."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least two values")
    ma, mb = a.mean(), b.mean()
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0.0 and vb == 0.0:
        if ma == mb:
            return 0.0, 1.0
        return float(np.sign(ma - mb) * np.inf), 0.0
    sa, sb = va / a.size, vb / b.size
    t = (ma - mb) / np.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa**2 / (a.size - 1) + sb**2 / (b.size - 1))
    p = 2.0 * special.stdtr(df, -abs(t))
    return float(t), float(p)


@dataclass
class MetricsReport:
    """One run's metric bundle; validates its own internal consistency."""

    tc: float
    td: float
    tq: float
    purity: float
    nmi: float
    topk_accuracy: dict
    macro_f1: float
    micro_f1: float
    seeds: list
    notes: str = ""

    def __post_init__(self):
        if not 0.0 <= self.td <= 1.0:
            raise ValueError(f"td={self.td} outside [0, 1]")
        for name in ("purity", "nmi", "macro_f1", "micro_f1"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0 + 1e-12:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if not np.isclose(self.tq, self.tc * self.td, atol=1e-9):
            raise ValueError(f"tq={self.tq} is not tc*td={self.tc * self.td}")

    def to_json(self):
        d = dict(self.__dict__)
        d["topk_accuracy"] = {str(k): v for k, v in self.topk_accuracy.items()}
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        d["topk_accuracy"] = {int(k): v for k, v in d["topk_accuracy"].items()}
        return cls(**d)

    def csv_header(self):
        ks = sorted(self.topk_accuracy)
        return ",".join(
            ["tc", "td", "tq", "purity", "nmi"]
            + [f"top{k}" for k in ks]
            + ["macro_f1", "micro_f1", "seeds"]
        )

    def csv_row(self):
        ks = sorted(self.topk_accuracy)
        cells = [self.tc, self.td, self.tq, self.purity, self.nmi]
        cells += [self.topk_accuracy[k] for k in ks]
        cells += [self.macro_f1, self.micro_f1]
        return ",".join(f"{c:.6g}" for c in cells) + "," + ";".join(str(s) for s in self.seeds)
