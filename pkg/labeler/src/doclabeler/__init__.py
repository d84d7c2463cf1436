"""Zero-shot document labeling over candidate label sets.

Each candidate label becomes a hypothesis sentence; a natural-language
-inference backend scores whether the document entails it, and the per-label
entailment probabilities are normalized into a label distribution. The output
file plugs straight into the topic-model CLI's --labels-file flag.
"""

from .labeling import (
    DEFAULT_TEMPLATE,
    LabelFailure,
    LabelRequest,
    LabelResult,
    agreement,
    label_documents,
    read_candidates,
    read_gold,
    read_requests,
    write_results,
)

__all__ = [
    "DEFAULT_TEMPLATE",
    "LabelFailure",
    "LabelRequest",
    "LabelResult",
    "agreement",
    "label_documents",
    "read_candidates",
    "read_gold",
    "read_requests",
    "write_results",
]
