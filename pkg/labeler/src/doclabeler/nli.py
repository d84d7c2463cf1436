"""Transformers-backed entailment scoring.

Imports are deferred so the rest of the package works without torch
installed; only constructing the backend requires it.
"""

from __future__ import annotations


class TransformersBackend:
    """Scores (document, hypothesis) pairs with a pretrained NLI classifier.

    For each pair the entailment-vs-contradiction logits are renormalized
    (neutral dropped) and the entailment share is returned. Documents longer
    than the model context are head-truncated: the tokenizer cuts the premise
    tail and keeps the hypothesis whole.
    """

    def __init__(self, model_id, batch_size=8, max_length=None, device="cpu"):
        import torch
        from transformers import AutoModelForSequenceClassification, AutoTokenizer

        if batch_size < 1:
            raise ValueError("batch_size must be positive")
        self._torch = torch
        self.tokenizer = AutoTokenizer.from_pretrained(model_id)
        self.model = AutoModelForSequenceClassification.from_pretrained(model_id)
        self.model.to(device).eval()
        self.batch_size = int(batch_size)
        self.device = device
        limit = getattr(self.tokenizer, "model_max_length", 512)
        self.max_length = int(max_length or min(limit, 1024))

        labels = {i: str(name).lower() for i, name in self.model.config.id2label.items()}
        self._entail = next((i for i, n in labels.items() if "entail" in n), None)
        self._contra = next((i for i, n in labels.items() if "contra" in n), None)
        if self._entail is None or self._contra is None:
            raise ValueError(
                f"{model_id} is not an NLI classifier (labels: {sorted(labels.values())})"
            )

    def entailment_probs(self, premise, hypotheses):
        torch = self._torch
        probs = []
        for start in range(0, len(hypotheses), self.batch_size):
            chunk = hypotheses[start : start + self.batch_size]
            enc = self.tokenizer(
                [premise] * len(chunk),
                chunk,
                truncation="only_first",
                max_length=self.max_length,
                padding=True,
                return_tensors="pt",
            ).to(self.device)
            with torch.no_grad():
                logits = self.model(**enc).logits
            pair = logits[:, [self._contra, self._entail]]
            probs.extend(torch.softmax(pair, dim=1)[:, 1].tolist())
        return probs
