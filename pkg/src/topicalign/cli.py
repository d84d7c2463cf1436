"""Command-line pipeline: preprocess -> train -> eval, plus topics, authors,
similarity, and a multi-seed benchmark.

A JSON config file drives every command; a handful of flags override config
fields (flag wins over file). Commands write into a fixed output layout
(vocab.tsv, corpus.bin, model.ckpt, train_report.json, metrics.json,
manifest.json, plus authors.tsv / embeddings.tsv / similarity.csv /
benchmark.json where applicable) and refresh manifest.json with a config
snapshot, the seeds, and sha256 hashes of everything written, so a run can
be reproduced bit-exactly.

Errors print a single JSON line to stderr; exit status 2 means the config
was rejected (nothing written), 1 means a command failed.

The TOPICALIGN_LOG environment variable sets verbosity: quiet, info
(default), or debug (streams per-epoch CSV to stdout).
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import align as al
from . import authors as au
from . import corpus as cp
from . import evaluation as ev
from . import model as md
from . import train as tr

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

ENV_LOG = "TOPICALIGN_LOG"

COMMANDS = ("preprocess", "train", "eval", "topics", "authors", "similarity", "benchmark")

_CONFIG_KEYS = {
    "corpus", "out", "variant", "topics", "topics_file", "embeddings",
    "reference_corpus", "labels_file", "seeds", "variants", "train",
    "metrics", "preprocess",
}

_METRIC_KEYS = {"top_n", "ks"}
_PREPROCESS_KEYS = {"max_doc_frac", "min_doc_count"}


class CliError(Exception):
    def __init__(self, message, exit_code=EXIT_RUNTIME):
        super().__init__(message)
        self.exit_code = exit_code


@dataclass
class RunConfig:
    out: str
    variant: str = "dvae"
    corpus: str | None = None
    topics: list | None = None
    topics_file: str | None = None
    embeddings: str | None = None
    reference_corpus: str | None = None
    labels_file: str | None = None
    seeds: list = field(default_factory=lambda: [0])
    variants: list | None = None
    train: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    preprocess: dict = field(default_factory=dict)

    @property
    def top_n(self):
        return int(self.metrics.get("top_n", ev.DEFAULT_TOP_N))

    @property
    def ks(self):
        return [int(k) for k in self.metrics.get("ks", [1, 3, 5])]

    def snapshot(self):
        return {k: getattr(self, k) for k in sorted(_CONFIG_KEYS)}


def validate_config_dict(d):
    """Validate a raw config mapping; returns (RunConfig or None, error list).
    All problems are collected in one pass."""
    errors = []
    if not isinstance(d, dict):
        return None, ["config root must be a JSON object"]
    for key in sorted(set(d) - _CONFIG_KEYS):
        errors.append(f"unknown config key {key!r}")

    out = d.get("out")
    if not isinstance(out, str) or not out:
        errors.append("'out' must be a nonempty path string")

    variant = d.get("variant", "dvae")
    if variant not in md.VARIANTS:
        errors.append(f"unknown variant {variant!r}; valid: {', '.join(md.VARIANTS)}")

    for key in ("corpus", "topics_file", "embeddings", "reference_corpus", "labels_file"):
        p = d.get(key)
        if p is None:
            continue
        if not isinstance(p, str):
            errors.append(f"{key!r} must be a path string")
        elif not os.path.isfile(p):
            errors.append(f"{key} path does not exist: {p}")

    topics = d.get("topics")
    if topics is not None:
        if not isinstance(topics, list) or not topics or not all(isinstance(t, str) for t in topics):
            errors.append("'topics' must be a nonempty list of label strings")
        if d.get("topics_file") is not None:
            errors.append("give either 'topics' or 'topics_file', not both")

    seeds = d.get("seeds", [0])
    if (not isinstance(seeds, list) or not seeds
            or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds)):
        errors.append("'seeds' must be a nonempty list of integers")

    variants = d.get("variants")
    if variants is not None:
        if not isinstance(variants, list) or not variants:
            errors.append("'variants' must be a nonempty list")
        else:
            for v in variants:
                if v not in md.VARIANTS:
                    errors.append(f"unknown variant {v!r} in 'variants'; valid: {', '.join(md.VARIANTS)}")

    train = d.get("train", {})
    if not isinstance(train, dict):
        errors.append("'train' must be an object of training fields")
        train = {}
    else:
        valid_fields = set(tr.TrainConfig.__dataclass_fields__)
        for key in sorted(set(train) - valid_fields):
            errors.append(f"unknown train field {key!r}")
        try:
            tr.TrainConfig(**{k: v for k, v in train.items() if k in valid_fields})
        except ValueError as exc:
            errors.append(str(exc))
        except TypeError as exc:
            errors.append(f"train config: {exc}")

    metrics = d.get("metrics", {})
    if not isinstance(metrics, dict):
        errors.append("'metrics' must be an object")
        metrics = {}
    else:
        for key in sorted(set(metrics) - _METRIC_KEYS):
            errors.append(f"unknown metrics field {key!r}")
        top_n = metrics.get("top_n", ev.DEFAULT_TOP_N)
        if not isinstance(top_n, int) or top_n < 1:
            errors.append("metrics.top_n must be a positive integer")
        ks = metrics.get("ks", [1, 3, 5])
        if not isinstance(ks, list) or not all(isinstance(k, int) and k >= 1 for k in ks):
            errors.append("metrics.ks must be a list of positive integers")

    pre = d.get("preprocess", {})
    if not isinstance(pre, dict):
        errors.append("'preprocess' must be an object")
        pre = {}
    else:
        for key in sorted(set(pre) - _PREPROCESS_KEYS):
            errors.append(f"unknown preprocess field {key!r}")
        frac = pre.get("max_doc_frac", 0.85)
        if not isinstance(frac, (int, float)) or not 0.0 < frac <= 1.0:
            errors.append("preprocess.max_doc_frac must be in (0, 1]")
        mdc = pre.get("min_doc_count", 30)
        if not isinstance(mdc, int) or mdc < 0:
            errors.append("preprocess.min_doc_count must be a nonnegative integer")

    if errors:
        return None, errors
    return (
        RunConfig(
            out=out,
            variant=variant,
            corpus=d.get("corpus"),
            topics=topics,
            topics_file=d.get("topics_file"),
            embeddings=d.get("embeddings"),
            reference_corpus=d.get("reference_corpus"),
            labels_file=d.get("labels_file"),
            seeds=list(seeds),
            variants=list(variants) if variants else None,
            train=dict(train),
            metrics=dict(metrics),
            preprocess=dict(pre),
        ),
        [],
    )


def validate_config(path):
    """Load and validate a config file; returns (RunConfig or None, errors)."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    except OSError as exc:
        return None, [f"cannot read config: {exc}"]
    try:
        d = json.loads(raw)
    except json.JSONDecodeError as exc:
        return None, [f"config syntax error at line {exc.lineno}: {exc.msg}"]
    return validate_config_dict(d)


# ---- shared helpers --------------------------------------------------------


def _verbosity():
    return os.environ.get(ENV_LOG, "info").lower()


def _info(msg):
    if _verbosity() in ("info", "debug"):
        print(msg, file=sys.stderr)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def _update_manifest(cfg: RunConfig, command, written, extra=None):
    path = os.path.join(cfg.out, "manifest.json")
    manifest = {"artifacts": {}}
    if os.path.isfile(path):
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    manifest["config"] = cfg.snapshot()
    manifest["seeds"] = cfg.seeds
    manifest["last_command"] = command
    if extra:
        manifest.update(extra)
    manifest.setdefault("artifacts", {})
    for name in written:
        manifest["artifacts"][name] = _sha256(os.path.join(cfg.out, name))
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _artifact(cfg, name, hint):
    path = os.path.join(cfg.out, name)
    if not os.path.isfile(path):
        raise CliError(f"{name} not found in {cfg.out}; run '{hint}' first")
    return path


def _merge_labels(docs, labels_file):
    """Fold a labeler output file (JSONL {"id","labels",...}) into documents."""
    by_id = {doc.id: doc for doc in docs}
    with open(labels_file, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CliError(f"{labels_file}:{lineno}: invalid JSON: {exc.msg}")
            if "id" not in rec or "labels" not in rec:
                raise CliError(f"{labels_file}:{lineno}: needs 'id' and 'labels'")
            doc = by_id.get(rec["id"])
            if doc is None:
                raise CliError(f"{labels_file}:{lineno}: unknown document id {rec['id']!r}")
            labels = rec["labels"]
            if not isinstance(labels, list) or not all(isinstance(l, str) for l in labels):
                raise CliError(f"{labels_file}:{lineno}: 'labels' must be a list of strings")
            for lab in labels:
                if lab == cp.RESERVED_LABEL:
                    raise CliError(f"{labels_file}:{lineno}: label {lab!r} is reserved")
            doc.labels |= set(labels)


def _load_topic_labels(cfg: RunConfig, known_labels):
    """Resolve the per-topic label assignments plus any alpha/floor the
    topics file carries. Returns (TopicLabelVector, overrides dict)."""
    if cfg.topics_file:
        tlv, alpha, floor = al.load_topic_config(cfg.topics_file, known_labels)
        overrides = {}
        if "alpha" not in cfg.train:
            overrides["alpha"] = alpha
        if "floor" not in cfg.train:
            overrides["floor"] = floor
        return tlv, overrides
    if cfg.topics:
        return al.build_topic_label_vector(cfg.topics, known_labels), {}
    raise CliError("topic configuration required: set 'topics' or 'topics_file'", EXIT_CONFIG)


def _corpus_labels(bow):
    out = set()
    for doc in bow:
        out |= doc.labels
    return out


def _train_config(cfg: RunConfig, seed, extra):
    fields = dict(extra)
    fields.update(cfg.train)
    fields["seed"] = seed
    return tr.TrainConfig(**fields)


def _load_embeddings(cfg: RunConfig, vocab):
    if not md.variant_uses_embeddings(cfg.variant) and cfg.embeddings is None:
        return None
    if cfg.embeddings is None:
        return None
    dim = int(cfg.train.get("embed_dim", tr.TrainConfig().embed_dim))
    return cp.load_word_embeddings(cfg.embeddings, vocab, dim=dim, seed=cfg.seeds[0])


def _theta(model: md.TopicModel, split):
    """Eval-mode posterior means for a corpus split."""
    if md.variant_uses_dense_input(model.variant):
        x = np.stack([doc.dense_features for doc in split])
    else:
        x = np.stack([doc.dense_counts(split.n_words) for doc in split])
    fwd = model.forward(x, training=False, z_mode="mean")
    return fwd.z.data


def _metrics_for(model, splits, tlv, cfg: RunConfig, seed):
    """MetricsReport for a trained model: coherence against the train split
    (or the configured reference corpus), clustering metrics on the test
    split."""
    train_split, _, test_split = splits
    top = ev.top_words(model.topic_word_matrix(), min(cfg.top_n, model.n_words))

    if cfg.reference_corpus:
        vocab = cp.load_vocabulary(_artifact(cfg, "vocab.tsv", "preprocess"))
        ref_docs = cp.read_documents(cfg.reference_corpus)
        for doc in ref_docs:
            doc.authors = set()
        reference = cp.vectorize(ref_docs, vocab, cp.AuthorVocabulary([]))
    else:
        reference = train_split

    notes = []
    info = {}
    tc = ev.coherence_npmi(top, reference, stats=info)
    if info["pairs_skipped"]:
        notes.append(f"coherence skipped {info['pairs_skipped']}/{info['pairs_total']} pairs")
    td = ev.diversity(top)
    tq = ev.quality(tc, td)

    theta = _theta(model, test_split)
    assign = theta.argmax(axis=1).tolist()
    labeled = [(i, min(doc.labels)) for i, doc in enumerate(test_split) if doc.labels]
    if labeled:
        idx = [i for i, _ in labeled]
        truth = [lab for _, lab in labeled]
        pur = ev.purity([assign[i] for i in idx], truth)
        nm = ev.nmi([assign[i] for i in idx], truth)
    else:
        pur, nm = 0.0, 0.0
        notes.append("no labeled test documents; purity/nmi skipped")

    topk, macro, micro = {}, 0.0, 0.0
    predictable = [
        (i, lab) for i, lab in labeled if lab in tlv.label_set
    ]
    if predictable and tlv.label_set:
        idx = [i for i, _ in predictable]
        truth = [lab for _, lab in predictable]
        topk, macro, micro = ev.label_predict(theta[idx], tlv, truth, cfg.ks)
        if len(predictable) != len(labeled):
            notes.append(
                f"label prediction restricted to {len(predictable)}/{len(labeled)} docs with labels in the topic map"
            )
    else:
        notes.append("no test documents with topic-mapped labels; label prediction skipped")

    return ev.MetricsReport(
        tc=tc, td=td, tq=tq, purity=pur, nmi=nm,
        topk_accuracy=topk, macro_f1=macro, micro_f1=micro,
        seeds=[seed], notes="; ".join(notes),
    )


# ---- commands --------------------------------------------------------------


def _cmd_preprocess(cfg: RunConfig):
    if not cfg.corpus:
        raise CliError("'corpus' path required for preprocess", EXIT_CONFIG)
    docs = cp.read_documents(cfg.corpus)
    if cfg.labels_file:
        _merge_labels(docs, cfg.labels_file)
    vocab = cp.build_vocabulary(
        docs,
        max_doc_frac=float(cfg.preprocess.get("max_doc_frac", 0.85)),
        min_doc_count=int(cfg.preprocess.get("min_doc_count", 30)),
        stopwords=cp.default_stopwords(),
    )
    authors = cp.build_author_vocabulary(docs)
    bow = cp.vectorize(docs, vocab, authors)
    for warning in bow.warnings:
        _info(f"preprocess: {warning}")
    os.makedirs(cfg.out, exist_ok=True)
    cp.save_vocabulary(vocab, os.path.join(cfg.out, "vocab.tsv"))
    cp.save_bow_corpus(bow, os.path.join(cfg.out, "corpus.bin"))
    written = ["vocab.tsv", "corpus.bin"]
    with open(os.path.join(cfg.out, "authors.tsv"), "w", encoding="utf-8") as fh:
        for name in authors.authors:
            fh.write(name + "\n")
    written.append("authors.tsv")
    _update_manifest(cfg, "preprocess", written)
    _info(f"preprocess: {len(bow)} docs, |V|={len(vocab)}, |A|={len(authors)} -> {cfg.out}")
    return EXIT_OK


def _load_author_names(cfg):
    path = _artifact(cfg, "authors.tsv", "preprocess")
    with open(path, encoding="utf-8") as fh:
        names = [line.rstrip("\n") for line in fh if line.strip()]
    return cp.AuthorVocabulary(names)


def _cmd_train(cfg: RunConfig):
    bow = cp.load_bow_corpus(_artifact(cfg, "corpus.bin", "preprocess"))
    tlv, overrides = _load_topic_labels(cfg, _corpus_labels(bow))
    seed = cfg.seeds[0]
    config = _train_config(cfg, seed, overrides)
    splits = cp.split_corpus(bow, seed=seed)
    embeddings = None
    if md.variant_uses_embeddings(cfg.variant):
        vocab = cp.load_vocabulary(_artifact(cfg, "vocab.tsv", "preprocess"))
        embeddings = _load_embeddings(cfg, vocab)
    log_stream = sys.stdout if _verbosity() == "debug" else None
    model, report = tr.train_model(
        splits[0], splits[1], tlv, config, cfg.variant,
        word_embeddings=embeddings, log_stream=log_stream,
    )
    os.makedirs(cfg.out, exist_ok=True)
    md.save_model(model, os.path.join(cfg.out, "model.ckpt"))
    with open(os.path.join(cfg.out, "train_report.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    _update_manifest(cfg, "train", ["model.ckpt", "train_report.json"],
                     extra={"train_effective": dataclasses.asdict(config)})
    last = report.epochs[-1].val_loss if report.epochs else float("nan")
    _info(f"train: {cfg.variant} seed={seed} epochs={len(report.epochs)} "
          f"val_loss={last:.4f} ({report.stopping_reason})")
    return EXIT_OK


def _cmd_eval(cfg: RunConfig):
    model = md.load_model(_artifact(cfg, "model.ckpt", "train"))
    bow = cp.load_bow_corpus(_artifact(cfg, "corpus.bin", "preprocess"))
    tlv, _ = _load_topic_labels(cfg, _corpus_labels(bow))
    if len(tlv) != model.n_topics:
        raise CliError(
            f"topic configuration has {len(tlv)} topics but checkpoint has {model.n_topics}"
        )
    seed = cfg.seeds[0]
    splits = cp.split_corpus(bow, seed=seed)
    report = _metrics_for(model, splits, tlv, cfg, seed)
    payload = json.loads(report.to_json())
    payload["checkpoint_sha256"] = _sha256(os.path.join(cfg.out, "model.ckpt"))
    with open(os.path.join(cfg.out, "metrics.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _update_manifest(cfg, "eval", ["metrics.json"])
    _info(f"eval: tq={report.tq:.4f} purity={report.purity:.4f} nmi={report.nmi:.4f}")
    return EXIT_OK


def _cmd_topics(cfg: RunConfig):
    model = md.load_model(_artifact(cfg, "model.ckpt", "train"))
    vocab = cp.load_vocabulary(_artifact(cfg, "vocab.tsv", "preprocess"))
    bow = cp.load_bow_corpus(_artifact(cfg, "corpus.bin", "preprocess"))
    tlv, _ = _load_topic_labels(cfg, _corpus_labels(bow))
    if len(tlv) != model.n_topics:
        raise CliError(
            f"topic configuration has {len(tlv)} topics but checkpoint has {model.n_topics}"
        )
    top = ev.top_words(model.topic_word_matrix(), min(cfg.top_n, model.n_words))
    for k, idxs in enumerate(top):
        words = " ".join(vocab.words[i] for i in idxs)
        print(f"topic{k}\t{tlv.entries[k]}\t{words}")
    return EXIT_OK


def _cmd_authors(cfg: RunConfig):
    model = md.load_model(_artifact(cfg, "model.ckpt", "train"))
    vocab = cp.load_vocabulary(_artifact(cfg, "vocab.tsv", "preprocess"))
    names = _load_author_names(cfg)
    bow = cp.load_bow_corpus(_artifact(cfg, "corpus.bin", "preprocess"))
    tlv, _ = _load_topic_labels(cfg, _corpus_labels(bow))
    au.export_embeddings(model, vocab, names, tlv, os.path.join(cfg.out, "embeddings.tsv"))
    _update_manifest(cfg, "authors", ["embeddings.tsv"])
    _info(f"authors: wrote embeddings.tsv ({len(vocab)} words, {model.n_topics} topics, {len(names)} authors)")
    return EXIT_OK


def _cmd_similarity(cfg: RunConfig):
    model = md.load_model(_artifact(cfg, "model.ckpt", "train"))
    names = _load_author_names(cfg)
    atm = au.extract_author_topics(model)
    au.export_similarity_csv(atm, names, os.path.join(cfg.out, "similarity.csv"))
    _update_manifest(cfg, "similarity", ["similarity.csv"])
    _info(f"similarity: wrote similarity.csv for {len(names)} authors")
    return EXIT_OK


def _cmd_benchmark(cfg: RunConfig):
    if len(cfg.seeds) < 2:
        raise CliError("benchmark needs at least two seeds for significance tests", EXIT_CONFIG)
    variants = cfg.variants or [cfg.variant]
    bow = cp.load_bow_corpus(_artifact(cfg, "corpus.bin", "preprocess"))
    tlv, overrides = _load_topic_labels(cfg, _corpus_labels(bow))
    vocab = None
    results = {v: {"purity": [], "nmi": [], "tc": [], "td": [], "tq": []} for v in variants}
    for variant in variants:
        run_cfg = RunConfig(**{**cfg.snapshot(), "variant": variant})
        embeddings = None
        if md.variant_uses_embeddings(variant):
            if vocab is None:
                vocab = cp.load_vocabulary(_artifact(cfg, "vocab.tsv", "preprocess"))
            embeddings = _load_embeddings(run_cfg, vocab)
        for seed in cfg.seeds:
            config = _train_config(cfg, seed, overrides)
            splits = cp.split_corpus(bow, seed=seed)
            model, _ = tr.train_model(
                splits[0], splits[1], tlv, config, variant, word_embeddings=embeddings
            )
            rep = _metrics_for(model, splits, tlv, run_cfg, seed)
            for key in results[variant]:
                results[variant][key].append(getattr(rep, key))
            _info(f"benchmark: {variant} seed={seed} purity={rep.purity:.4f} tq={rep.tq:.4f}")

    payload = {"seeds": cfg.seeds, "variants": {}, "welch": {}}
    for variant, metrics in results.items():
        payload["variants"][variant] = {
            key: {
                "values": vals,
                "mean": float(np.mean(vals)),
                "std": float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0,
            }
            for key, vals in metrics.items()
        }
    for i, a in enumerate(variants):
        for b in variants[i + 1:]:
            pair = {}
            for key in ("purity", "nmi", "tq"):
                t, p = ev.welch_ttest(results[a][key], results[b][key])
                pair[key] = {"t": t, "p": p}
            payload["welch"][f"{a}_vs_{b}"] = pair
    with open(os.path.join(cfg.out, "benchmark.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _update_manifest(cfg, "benchmark", ["benchmark.json"])
    return EXIT_OK


_HANDLERS = {
    "preprocess": _cmd_preprocess,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "topics": _cmd_topics,
    "authors": _cmd_authors,
    "similarity": _cmd_similarity,
    "benchmark": _cmd_benchmark,
}


# ---- entry point -----------------------------------------------------------


def _parser():
    parser = argparse.ArgumentParser(
        prog="topicalign",
        description="Train and evaluate label- and author-aligned topic models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} step")
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override the config seeds with one seed")
        p.add_argument("--variant", help="override the model variant")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--topics-file", dest="topics_file", help="override the topic-label config file")
        p.add_argument("--labels-file", dest="labels_file", help="labeler output JSONL to fold into the corpus")
        p.add_argument("--top-n", dest="top_n", type=int, help="override the top-word count")
    return parser


def _merge_flags(d, args):
    if args.seed is not None:
        d["seeds"] = [args.seed]
    if args.variant is not None:
        d["variant"] = args.variant
    if args.out is not None:
        d["out"] = args.out
    if args.topics_file is not None:
        d["topics_file"] = args.topics_file
        d.pop("topics", None)
    if args.labels_file is not None:
        d["labels_file"] = args.labels_file
    if args.top_n is not None:
        d.setdefault("metrics", {})["top_n"] = args.top_n
    return d


def _fail(messages, exit_code):
    print(json.dumps({"error": messages if isinstance(messages, str) else "; ".join(messages)}),
          file=sys.stderr)
    return exit_code


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        return _fail(f"cannot read config: {exc}", EXIT_CONFIG)
    except json.JSONDecodeError as exc:
        return _fail(f"config syntax error at line {exc.lineno}: {exc.msg}", EXIT_CONFIG)
    if isinstance(raw, dict):
        raw = _merge_flags(raw, args)
    cfg, errors = validate_config_dict(raw)
    if errors:
        return _fail(errors, EXIT_CONFIG)
    try:
        return _HANDLERS[args.command](cfg)
    except CliError as exc:
        return _fail(str(exc), exc.exit_code)
    except (ValueError, OSError, FloatingPointError) as exc:
        return _fail(str(exc), EXIT_RUNTIME)


if __name__ == "__main__":
    sys.exit(main())
