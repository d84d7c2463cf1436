"""Request/result types, the labeling loop, and the JSONL file formats."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

DEFAULT_TEMPLATE = "This text is about {}."


@dataclass
class LabelRequest:
    doc_id: str
    text: str
    candidates: list
    template: str = DEFAULT_TEMPLATE

    def __post_init__(self):
        if not self.candidates:
            raise ValueError(f"{self.doc_id}: candidate label list is empty")
        if any(not isinstance(c, str) or not c for c in self.candidates):
            raise ValueError(f"{self.doc_id}: candidate labels must be nonempty strings")
        if self.template.count("{}") != 1:
            raise ValueError(
                f"template must contain exactly one {{}} placeholder: {self.template!r}"
            )

    def hypotheses(self):
        return [self.template.format(c) for c in self.candidates]


@dataclass
class LabelResult:
    doc_id: str
    ranked: list  # (label, probability) pairs, probability descending

    def __post_init__(self):
        probs = [p for _, p in self.ranked]
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError(f"{self.doc_id}: probabilities outside [0, 1]")
        if any(a < b for a, b in zip(probs, probs[1:])):
            raise ValueError(f"{self.doc_id}: probabilities not descending")

    @property
    def chosen(self):
        return self.ranked[0][0]


@dataclass
class LabelFailure:
    doc_id: str
    error: str


def label_documents(requests, backend):
    """Score every request with the backend; per-doc failures are recorded
    and the doc skipped. Returns (results, failures)."""
    results, failures = [], []
    for req in requests:
        try:
            if not req.text or not req.text.strip():
                raise ValueError("document text is empty")
            raw = np.asarray(backend.entailment_probs(req.text, req.hypotheses()),
                             dtype=np.float64)
            if raw.shape != (len(req.candidates),):
                raise ValueError(
                    f"backend returned {raw.shape} scores for {len(req.candidates)} labels"
                )
            if not np.all(np.isfinite(raw)) or np.any(raw < 0.0) or np.any(raw > 1.0):
                raise ValueError("backend scores outside [0, 1]")
            total = raw.sum()
            dist = raw / total if total > 0 else np.full(raw.size, 1.0 / raw.size)
            order = np.argsort(-dist, kind="stable")
            ranked = [(req.candidates[i], float(dist[i])) for i in order]
            results.append(LabelResult(req.doc_id, ranked))
        except Exception as exc:  # per-doc isolation: one bad doc must not sink the batch
            failures.append(LabelFailure(req.doc_id, f"{type(exc).__name__}: {exc}"))
    return results, failures


def agreement(results, gold):
    """Fraction of docs present in both results and gold whose chosen label
    matches the gold label."""
    overlap = [r for r in results if r.doc_id in gold]
    if not overlap:
        raise ValueError("no overlap between results and gold ids")
    return sum(r.chosen == gold[r.doc_id] for r in overlap) / len(overlap)


# ---- file formats ----------------------------------------------------------


def read_requests(path, candidates, template=DEFAULT_TEMPLATE):
    """JSONL {"id", "text"} -> LabelRequest list."""
    requests = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from None
            if "id" not in rec or "text" not in rec:
                raise ValueError(f"{path}:{lineno}: needs 'id' and 'text'")
            doc_id = str(rec["id"])
            if doc_id in seen:
                raise ValueError(f"{path}:{lineno}: duplicate id {doc_id!r}")
            seen.add(doc_id)
            requests.append(LabelRequest(doc_id, str(rec["text"]), list(candidates), template))
    return requests


def read_candidates(path):
    with open(path, encoding="utf-8") as fh:
        labels = [line.strip() for line in fh if line.strip()]
    if not labels:
        raise ValueError(f"{path}: no candidate labels")
    if len(set(labels)) != len(labels):
        raise ValueError(f"{path}: duplicate candidate labels")
    return labels


def read_gold(path):
    """JSONL with "id" and either "label" or "labels" (first entry used)."""
    gold = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "label" in rec:
                gold[str(rec["id"])] = str(rec["label"])
            elif rec.get("labels"):
                gold[str(rec["id"])] = str(rec["labels"][0])
            else:
                raise ValueError(f"{path}:{lineno}: needs 'label' or nonempty 'labels'")
    return gold


def write_results(results, path, threshold=None):
    """JSONL {"id", "labels": [str], "scores": [float]}. Default emits the
    chosen label only; with a threshold, every label scoring above it."""
    with open(path, "w", encoding="utf-8") as fh:
        for res in results:
            if threshold is None:
                pairs = res.ranked[:1]
            else:
                pairs = [(l, p) for l, p in res.ranked if p > threshold]
            rec = {
                "id": res.doc_id,
                "labels": [l for l, _ in pairs],
                "scores": [p for _, p in pairs],
            }
            fh.write(json.dumps(rec) + "\n")
