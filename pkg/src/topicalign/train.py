"""Batched training loop: per-document aligned priors, Dirichlet sampling,
Adam updates, validation-based early stopping, and seeded reproducibility.

Randomness layout: the model is initialized from the config seed; training
noise (dropout masks, Gamma draws) flows from one trainer-owned generator;
epoch shuffles are a pure function of (seed, epoch). Validation passes use
the Dirichlet mean instead of a draw, so they consume no randomness.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import align
from .model import (
    TopicModel,
    variant_uses_authors,
    variant_uses_dense_input,
    variant_uses_labels,
)

LOG_HEADER = "epoch,train_loss,val_loss,kl,doc_nll,auth_nll"


@dataclass
class TrainConfig:
    batch_size: int = 128
    alpha: float = 0.02
    beta: float = 2.0
    learning_rate: float = 0.001
    max_epochs: int = 100
    keep_prob: float = 0.25
    seed: int = 0
    floor: float = 1e-8
    early_stop_patience: int = 10
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    hidden: int = 512
    embed_dim: int = 300
    scale_batchnorm: bool = False

    def __post_init__(self):
        positive = {
            "batch_size": self.batch_size,
            "alpha": self.alpha,
            "beta": self.beta,
            "learning_rate": self.learning_rate,
            "keep_prob": self.keep_prob,
            "floor": self.floor,
            "early_stop_patience": self.early_stop_patience,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
            "hidden": self.hidden,
            "embed_dim": self.embed_dim,
        }
        bad = [k for k, v in positive.items() if not v > 0]
        if self.max_epochs < 0:
            bad.append("max_epochs")
        if not (0.0 < self.keep_prob <= 1.0):
            bad.append("keep_prob")
        if self.floor >= self.alpha:
            bad.append("floor")
        if bad:
            raise ValueError(f"invalid config fields: {sorted(set(bad))}")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    doc_nll: float
    auth_nll: float
    kl: float


@dataclass
class TrainReport:
    variant: str
    seed: int
    epochs: list = field(default_factory=list)
    wall_clock_seconds: float = 0.0
    stopping_reason: str = ""
    best_epoch: int = 0
    checkpoint_policy: str = "best-validation"
    notes: list = field(default_factory=list)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @staticmethod
    def from_json(text):
        data = json.loads(text)
        data["epochs"] = [EpochStats(**e) for e in data["epochs"]]
        return TrainReport(**data)


class AdamState:
    def __init__(self, params):
        self.m = [np.zeros_like(t.data) for t in params]
        self.v = [np.zeros_like(t.data) for t in params]
        self.step = 0


def adam_update(params, state: AdamState, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam step over parameter tensors holding .grad."""
    state.step += 1
    t = state.step
    for i, p in enumerate(params):
        g = p.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {p.name or i!r}")
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g
        m_hat = state.m[i] / (1.0 - beta1**t)
        v_hat = state.v[i] / (1.0 - beta2**t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)


def make_batches(n, batch_size):
    """Consecutive index ranges; a trailing singleton is merged into the prior
    batch so training-mode batch statistics always see at least two rows."""
    if n == 0:
        return []
    edges = list(range(0, n, batch_size)) + [n]
    spans = [(a, b) for a, b in zip(edges[:-1], edges[1:])]
    if len(spans) > 1 and spans[-1][1] - spans[-1][0] == 1:
        a, _ = spans.pop()
        spans[-1] = (spans[-1][0], n)
    return spans


@dataclass
class _Arrays:
    """Per-split dense matrices the loop consumes."""

    x_in: np.ndarray  # encoder input (counts or dense features)
    counts: np.ndarray  # reconstruction targets
    authors: np.ndarray | None
    gamma: np.ndarray  # per-doc prior concentrations


def _prepare(split, topic_labels, cfg, variant, with_authors, train_rows_only=False):
    v = split.n_words
    k = len(topic_labels)
    counts = np.stack([d.dense_counts(v) for d in split.docs]) if len(split.docs) else np.zeros((0, v))
    if variant_uses_dense_input(variant):
        missing = [d.id for d in split.docs if d.dense_features is None]
        if missing:
            raise ValueError(f"ctm-input variant needs dense features; missing on {missing[:5]}")
        x_in = np.stack([d.dense_features for d in split.docs])
    else:
        x_in = counts
    authors = None
    if with_authors:
        authors = np.stack([d.author_multihot(split.n_authors) for d in split.docs]) if len(split.docs) else np.zeros((0, split.n_authors))
    if variant_uses_labels(variant):
        ind = np.stack([align.build_indicator(topic_labels, d.labels) for d in split.docs]) if len(split.docs) else np.zeros((0, k))
    else:
        ind = np.ones((len(split.docs), k))
    gamma = np.where(ind > 0, cfg.alpha, cfg.floor)
    arrays = _Arrays(x_in, counts, authors, gamma)
    if train_rows_only:
        keep = counts.sum(axis=1) > 0
        arrays = _Arrays(x_in[keep], counts[keep], None if authors is None else authors[keep], gamma[keep])
    return arrays


def train_model(train_split, val_split, topic_labels, config: TrainConfig, variant,
                word_embeddings=None, log_stream=None, epoch_hook=None):
    """Run the training loop; returns (model restored to best validation, report).

    ``epoch_hook(model, epoch)``, when given, runs after each epoch's update
    and validation pass (for monitoring; must not mutate the model).
    """
    if len(train_split) == 0:
        raise ValueError("empty training split")
    t_start = time.monotonic()
    with_authors = variant_uses_authors(variant) and train_split.n_authors > 0
    k = len(topic_labels)
    n_features = None
    if variant_uses_dense_input(variant):
        sample_feat = next((d.dense_features for d in train_split.docs if d.dense_features is not None), None)
        if sample_feat is None:
            raise ValueError("ctm-input variant needs dense features on the corpus")
        n_features = sample_feat.size
    model = TopicModel(
        variant,
        n_words=train_split.n_words,
        n_topics=k,
        n_authors=train_split.n_authors if with_authors else 0,
        hidden=config.hidden,
        keep_prob=config.keep_prob,
        embed_dim=config.embed_dim,
        n_features=n_features,
        word_embeddings=word_embeddings,
        scale_batchnorm=config.scale_batchnorm,
        posterior_init=config.alpha,
        seed=config.seed,
    )
    report = TrainReport(variant=variant, seed=config.seed)
    train = _prepare(train_split, topic_labels, config, variant, with_authors, train_rows_only=True)
    if train.counts.shape[0] == 0:
        raise ValueError("no trainable documents (all empty after vectorization)")
    val = _prepare(val_split, topic_labels, config, variant, with_authors) if val_split is not None and len(val_split) else None

    if log_stream is not None:
        log_stream.write(LOG_HEADER + "\n")

    if config.max_epochs == 0:
        report.stopping_reason = "max_epochs=0"
        report.wall_clock_seconds = time.monotonic() - t_start
        return model, report

    params = model.parameters()
    adam = AdamState(params)
    noise_rng = np.random.default_rng([config.seed, 1])
    n = train.counts.shape[0]
    best_val = np.inf
    best_arrays = None
    best_epoch = 0
    since_best = 0
    stop_reason = f"max_epochs={config.max_epochs}"

    for epoch in range(1, config.max_epochs + 1):
        order = np.random.default_rng([config.seed, 2, epoch]).permutation(n)
        totals = np.zeros(4)  # loss, doc_nll, auth_nll, kl, count-weighted
        seen = 0
        for b_idx, (a, b) in enumerate(make_batches(n, config.batch_size)):
            rows = order[a:b]
            fwd = model.forward(train.x_in[rows], training=True, rng=noise_rng)
            loss, comps = model.loss(
                train.counts[rows],
                None if train.authors is None else train.authors[rows],
                fwd,
                train.gamma[rows],
                config.beta,
            )
            loss_val = loss.data.item()
            if not np.isfinite(loss_val):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch} batch {b_idx}: "
                    f"doc_nll={comps['doc_nll']:.6g} auth_nll={comps['auth_nll']:.6g} kl={comps['kl']:.6g}"
                )
            for p in params:
                p.zero_grad()
            loss.backward()
            adam_update(params, adam, config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)
            w = len(rows)
            totals += w * np.array([loss_val, comps["doc_nll"], comps["auth_nll"], comps["kl"]])
            seen += w
        train_loss, doc_nll, auth_nll, kl = totals / seen
        val_loss = _validation_loss(model, val, config) if val is not None else train_loss
        stats = EpochStats(epoch, train_loss, val_loss, doc_nll, auth_nll, kl)
        report.epochs.append(stats)
        if log_stream is not None:
            log_stream.write(
                f"{epoch},{train_loss:.6f},{val_loss:.6f},{kl:.6f},{doc_nll:.6f},{auth_nll:.6f}\n"
            )
        if epoch_hook is not None:
            epoch_hook(model, epoch)
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_arrays = {k_: v.copy() for k_, v in model.named_arrays().items()}
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.early_stop_patience:
                stop_reason = f"early_stop(patience={config.early_stop_patience})"
                break

    if best_arrays is not None:
        current = model.named_arrays()
        for name, arr in best_arrays.items():
            current[name][...] = arr
    report.best_epoch = best_epoch
    report.stopping_reason = stop_reason
    report.wall_clock_seconds = time.monotonic() - t_start
    return model, report


def _validation_loss(model, val: _Arrays, config):
    """Deterministic per-doc mean loss: eval-mode forward with the Dirichlet mean."""
    n = val.counts.shape[0]
    total = 0.0
    for a, b in make_batches(n, config.batch_size):
        fwd = model.forward(val.x_in[a:b], training=False, z_mode="mean")
        loss, _ = model.loss(
            val.counts[a:b],
            None if val.authors is None else val.authors[a:b],
            fwd,
            val.gamma[a:b],
            config.beta,
        )
        total += loss.data.item() * (b - a)
    return total / n
