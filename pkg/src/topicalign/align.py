"""Topic-label alignment: the global topic-label vector, per-document
indicators, and the label-aligned Dirichlet prior.

A topic either carries one expert label or the reserved string "no-label".
A document's indicator marks the topics it may use; the aligned prior keeps
the base concentration on those topics and clamps the rest to a small floor
(an exact zero would make the KL term divergent).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .corpus import RESERVED_LABEL

DEFAULT_ALPHA = 0.02
DEFAULT_FLOOR = 1e-8


@dataclass
class TopicLabelVector:
    entries: list

    def __post_init__(self):
        if len(self.entries) < 1:
            raise ValueError("need at least one topic")
        self.label_set = {e for e in self.entries if e != RESERVED_LABEL}

    def __len__(self):
        return len(self.entries)

    @property
    def has_unlabeled(self):
        return RESERVED_LABEL in self.entries


@dataclass
class DirichletParams:
    concentration: np.ndarray
    floor: float
    structural_zero: np.ndarray = field(default=None)

    def __post_init__(self):
        self.concentration = np.asarray(self.concentration, dtype=np.float64)
        if self.structural_zero is None:
            self.structural_zero = np.zeros(self.concentration.shape, dtype=bool)
        if np.any(self.concentration < self.floor) or self.floor <= 0:
            raise ValueError("effective concentrations must be >= floor > 0")


def build_topic_label_vector(assignments, known_labels):
    """Topic-index-ordered label assignments; non-reserved entries must be known."""
    unknown = [a for a in assignments if a != RESERVED_LABEL and a not in known_labels]
    if unknown:
        raise ValueError(f"unknown labels in topic assignments: {sorted(set(unknown))}")
    return TopicLabelVector(list(assignments))


def build_indicator(topic_labels, doc_labels):
    """Multi-hot over topics: bit k set iff topic k's label is on the document.

    Unlabeled documents, and documents whose labels match no topic, resolve
    to the "no-label" topics.
    """
    entries = topic_labels.entries
    effective = set(doc_labels) & topic_labels.label_set
    if not effective:
        if not topic_labels.has_unlabeled:
            raise ValueError(
                f"document labels {sorted(doc_labels)} match no topic and there are "
                "no 'no-label' topics to fall back to"
            )
        effective = {RESERVED_LABEL}
    return np.array([1.0 if e in effective else 0.0 for e in entries])


def expert_prior(alpha, indicator, floor=DEFAULT_FLOOR):
    """Aligned prior: alpha on permitted topics, floor elsewhere."""
    indicator = np.asarray(indicator, dtype=np.float64)
    if not (alpha > 0 and floor > 0 and floor < alpha):
        raise ValueError("need 0 < floor < alpha")
    if not np.any(indicator > 0):
        raise ValueError("all-zero indicator: no topic is permitted for this document")
    conc = np.where(indicator > 0, alpha, floor)
    return DirichletParams(conc, floor, structural_zero=indicator == 0)


def load_topic_config(path, known_labels):
    """Topic-label configuration JSON: {"topics": [...], "alpha": ..., "floor": ...}."""
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if "topics" not in cfg or not isinstance(cfg["topics"], list):
        raise ValueError(f"{path}: missing 'topics' list")
    alpha = float(cfg.get("alpha", DEFAULT_ALPHA))
    floor = float(cfg.get("floor", DEFAULT_FLOOR))
    tlv = build_topic_label_vector([str(t) for t in cfg["topics"]], known_labels)
    return tlv, alpha, floor
