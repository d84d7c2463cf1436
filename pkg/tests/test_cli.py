"""End-to-end command-line tests, run in-process through cli.main."""

import hashlib
import json

import numpy as np
import pytest

import synth
from topicalign import cli
from topicalign import corpus as cp
from topicalign.train import TrainReport

K = 3
LABELS = [f"label{k}" for k in range(K)]


def write_jsonl(path, docs, strip_labels=False):
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            rec = {
                "id": d.id,
                "tokens": d.tokens,
                "labels": [] if strip_labels else sorted(d.labels),
                "authors": sorted(d.authors),
            }
            fh.write(json.dumps(rec) + "\n")


def write_config(path, corpus, out, **over):
    cfg = {
        "corpus": str(corpus),
        "out": str(out),
        "variant": "fantom_l",
        "topics": list(LABELS),
        "seeds": [0],
        "train": {"hidden": 12, "max_epochs": 3, "batch_size": 32, "embed_dim": 8},
        "preprocess": {"max_doc_frac": 1.0, "min_doc_count": 0},
    }
    cfg.update(over)
    cfg = {k: v for k, v in cfg.items() if v is not None}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg, fh)
    return str(path)


def last_error(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    return json.loads(err[-1])["error"]


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cliwork")
    docs, truth = synth.planted_corpus(
        n_docs=120, n_topics=K, vocab_size=60, doc_len=30, seed=3, n_authors=4
    )
    corpus_path = root / "corpus.jsonl"
    write_jsonl(corpus_path, docs)
    return {"root": root, "corpus": corpus_path, "docs": docs, "truth": truth}


@pytest.fixture(scope="module")
def trained(work):
    out = work["root"] / "run_main"
    cfg = write_config(work["root"] / "cfg_main.json", work["corpus"], out)
    assert cli.main(["preprocess", "--config", cfg]) == 0
    assert cli.main(["train", "--config", cfg]) == 0
    return cfg, out


@pytest.fixture(scope="module")
def trained_etm(work):
    out = work["root"] / "run_etm"
    cfg = write_config(work["root"] / "cfg_etm.json", work["corpus"], out, variant="etm")
    assert cli.main(["preprocess", "--config", cfg]) == 0
    assert cli.main(["train", "--config", cfg]) == 0
    return cfg, out


class TestConfigValidation:
    def test_missing_config_file(self, tmp_path, capsys):
        rc = cli.main(["train", "--config", str(tmp_path / "nope.json")])
        assert rc == 2
        assert "cannot read config" in last_error(capsys)

    def test_syntax_error_reports_line(self, tmp_path, capsys):
        p = tmp_path / "broken.json"
        p.write_text('{\n"out": "x",\n"variant": oops\n}\n')
        rc = cli.main(["train", "--config", str(p)])
        assert rc == 2
        assert "line 3" in last_error(capsys)

    def test_all_errors_collected(self, tmp_path, capsys):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({
            "variant": "pony",
            "seeds": "zero",
            "train": {"alpha": -1.0, "warp": 9},
            "mystery": 1,
        }))
        rc = cli.main(["train", "--config", str(p)])
        assert rc == 2
        msg = last_error(capsys)
        for frag in ("'out'", "pony", "'seeds'", "alpha", "warp", "mystery"):
            assert frag in msg, f"missing {frag!r} in: {msg}"

    def test_nonobject_root(self, tmp_path, capsys):
        p = tmp_path / "list.json"
        p.write_text("[1, 2]")
        assert cli.main(["train", "--config", str(p)]) == 2
        assert "JSON object" in last_error(capsys)

    def test_invalid_config_writes_nothing(self, tmp_path, work, capsys):
        out = tmp_path / "never"
        cfg = write_config(tmp_path / "cfg.json", work["corpus"], out, variant="pony")
        assert cli.main(["preprocess", "--config", cfg]) == 2
        capsys.readouterr()
        assert not out.exists()

    def test_missing_referenced_path(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "cfg.json", tmp_path / "ghost.jsonl", tmp_path / "o")
        assert cli.main(["preprocess", "--config", cfg]) == 2
        assert "ghost.jsonl" in last_error(capsys)

    def test_corpus_required_for_preprocess(self, tmp_path, capsys):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"out": str(tmp_path / "o"), "topics": LABELS}))
        cfg = str(p)
        assert cli.main(["preprocess", "--config", cfg]) == 2
        assert "corpus" in last_error(capsys)

    def test_unknown_command_rejected(self):
        with pytest.raises(SystemExit):
            cli.main(["bogus", "--config", "x"])


class TestPreprocess:
    def test_artifacts_and_manifest(self, tmp_path, work):
        out = tmp_path / "pre"
        cfg = write_config(tmp_path / "cfg.json", work["corpus"], out)
        assert cli.main(["preprocess", "--config", cfg]) == 0
        for name in ("vocab.tsv", "corpus.bin", "authors.tsv", "manifest.json"):
            assert (out / name).is_file(), name
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["last_command"] == "preprocess"
        assert manifest["seeds"] == [0]
        assert manifest["config"]["variant"] == "fantom_l"
        digest = hashlib.sha256((out / "vocab.tsv").read_bytes()).hexdigest()
        assert manifest["artifacts"]["vocab.tsv"] == "sha256:" + digest
        names = (out / "authors.tsv").read_text().split()
        assert names == [f"author{i:02d}" for i in range(4)]

    def test_labels_file_merges_into_corpus(self, tmp_path, work):
        bare = tmp_path / "bare.jsonl"
        write_jsonl(bare, work["docs"], strip_labels=True)
        labels = tmp_path / "labels.jsonl"
        with open(labels, "w", encoding="utf-8") as fh:
            for d in work["docs"][:30]:
                fh.write(json.dumps({"id": d.id, "labels": ["label0"], "scores": [0.9]}) + "\n")
        out = tmp_path / "pre"
        cfg = write_config(tmp_path / "cfg.json", bare, out)
        assert cli.main(["preprocess", "--config", cfg, "--labels-file", str(labels)]) == 0
        bow = cp.load_bow_corpus(out / "corpus.bin")
        labeled = [doc for doc in bow if doc.labels]
        assert len(labeled) == 30
        assert all(doc.labels == {"label0"} for doc in labeled)

    def test_labels_file_unknown_id(self, tmp_path, work, capsys):
        labels = tmp_path / "labels.jsonl"
        labels.write_text(json.dumps({"id": "nope", "labels": ["label0"]}) + "\n")
        out = tmp_path / "pre"
        cfg = write_config(tmp_path / "cfg.json", work["corpus"], out,
                           labels_file=str(labels))
        assert cli.main(["preprocess", "--config", cfg]) == 1
        assert "unknown document id" in last_error(capsys)


class TestTrain:
    def test_checkpoint_and_report(self, trained):
        cfg, out = trained
        assert (out / "model.ckpt").is_file()
        report = TrainReport.from_json((out / "train_report.json").read_text())
        assert report.variant == "fantom_l"
        assert len(report.epochs) == 3
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["train_effective"]["alpha"] == pytest.approx(0.02)
        assert set(manifest["artifacts"]) >= {"model.ckpt", "train_report.json"}

    def test_deterministic_across_directories(self, tmp_path, work):
        blobs = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            cfg = write_config(tmp_path / f"cfg_{tag}.json", work["corpus"], out)
            assert cli.main(["preprocess", "--config", cfg]) == 0
            assert cli.main(["train", "--config", cfg]) == 0
            blobs.append((out / "model.ckpt").read_bytes())
        assert blobs[0] == blobs[1]

    def test_seed_flag_overrides_config(self, tmp_path, work):
        out = tmp_path / "s7"
        cfg = write_config(tmp_path / "cfg.json", work["corpus"], out)
        assert cli.main(["preprocess", "--config", cfg]) == 0
        assert cli.main(["train", "--config", cfg, "--seed", "7"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seeds"] == [7]
        assert manifest["train_effective"]["seed"] == 7

    def test_topics_file_supplies_alpha_and_floor(self, tmp_path, work):
        topics = tmp_path / "topics.json"
        topics.write_text(json.dumps({"topics": LABELS, "alpha": 0.05, "floor": 1e-9}))
        out = tmp_path / "tf"
        cfg = write_config(tmp_path / "cfg.json", work["corpus"], out,
                           topics=None, topics_file=str(topics))
        assert cli.main(["preprocess", "--config", cfg]) == 0
        assert cli.main(["train", "--config", cfg]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["train_effective"]["alpha"] == pytest.approx(0.05)
        assert manifest["train_effective"]["floor"] == pytest.approx(1e-9)

    def test_explicit_train_fields_beat_topics_file(self, tmp_path, work):
        topics = tmp_path / "topics.json"
        topics.write_text(json.dumps({"topics": LABELS, "alpha": 0.05, "floor": 1e-9}))
        out = tmp_path / "tf2"
        cfg = write_config(
            tmp_path / "cfg.json", work["corpus"], out,
            topics=None, topics_file=str(topics),
            train={"hidden": 12, "max_epochs": 1, "batch_size": 32, "alpha": 0.03},
        )
        assert cli.main(["preprocess", "--config", cfg]) == 0
        assert cli.main(["train", "--config", cfg]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["train_effective"]["alpha"] == pytest.approx(0.03)

    def test_train_without_preprocess_fails(self, tmp_path, work, capsys):
        out = tmp_path / "empty"
        out.mkdir()
        cfg = write_config(tmp_path / "cfg.json", work["corpus"], out)
        assert cli.main(["train", "--config", cfg]) == 1
        assert "preprocess" in last_error(capsys)


class TestEval:
    def test_metrics_reference_checkpoint_hash(self, trained):
        cfg, out = trained
        assert cli.main(["eval", "--config", cfg]) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        manifest = json.loads((out / "manifest.json").read_text())
        assert metrics["checkpoint_sha256"] == manifest["artifacts"]["model.ckpt"]
        assert 0.0 <= metrics["purity"] <= 1.0
        assert 0.0 <= metrics["nmi"] <= 1.0
        np.testing.assert_allclose(metrics["tq"], metrics["tc"] * metrics["td"], atol=1e-9)
        assert set(metrics["topk_accuracy"]) == {"1", "3", "5"}

    def test_topic_count_mismatch(self, tmp_path, trained, work, capsys):
        cfg, out = trained
        bad = write_config(tmp_path / "cfg4.json", work["corpus"], out,
                           topics=LABELS + ["no-label"])
        assert cli.main(["eval", "--config", bad]) == 1
        msg = last_error(capsys)
        assert "4 topics" in msg and "3" in msg

    def test_eval_accepts_any_variant_checkpoint(self, tmp_path, work):
        out = tmp_path / "dvae"
        cfg = write_config(tmp_path / "cfg.json", work["corpus"], out,
                           variant="dvae", topics=["no-label"] * K)
        assert cli.main(["preprocess", "--config", cfg]) == 0
        assert cli.main(["train", "--config", cfg]) == 0
        assert cli.main(["eval", "--config", cfg]) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert "label prediction skipped" in metrics["notes"]

    def test_eval_on_embedding_variant(self, trained_etm):
        cfg, out = trained_etm
        assert cli.main(["eval", "--config", cfg]) == 0
        assert (out / "metrics.json").is_file()


class TestTopics:
    def test_rows_on_stdout(self, trained, capsys):
        cfg, out = trained
        assert cli.main(["topics", "--config", cfg]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == K
        for k, line in enumerate(lines):
            name, label, words = line.split("\t")
            assert name == f"topic{k}"
            assert label == LABELS[k]
            assert len(words.split()) == 25

    def test_top_n_flag(self, trained, capsys):
        cfg, out = trained
        assert cli.main(["topics", "--config", cfg, "--top-n", "5"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert all(len(line.split("\t")[2].split()) == 5 for line in lines)


class TestAuthorCommands:
    def test_embeddings_export(self, trained_etm):
        cfg, out = trained_etm
        assert cli.main(["authors", "--config", cfg]) == 0
        lines = (out / "embeddings.tsv").read_text().strip().splitlines()
        n_words = len((out / "vocab.tsv").read_text().strip().splitlines())
        assert lines[0].startswith("kind\tname\tlabel\t")
        assert len(lines) == 1 + n_words + K + 4
        manifest = json.loads((out / "manifest.json").read_text())
        assert "embeddings.tsv" in manifest["artifacts"]

    def test_similarity_export(self, trained_etm):
        cfg, out = trained_etm
        assert cli.main(["similarity", "--config", cfg]) == 0
        rows = [r.split(",") for r in (out / "similarity.csv").read_text().strip().splitlines()]
        assert rows[0][1:] == [f"author{i:02d}" for i in range(4)]
        grid = np.array([[float(v) for v in row[1:]] for row in rows[1:]])
        np.testing.assert_allclose(grid, grid.T, atol=1e-12)
        np.testing.assert_allclose(np.diag(grid), 1.0, atol=1e-12)

    def test_similarity_needs_author_decoder(self, trained, capsys):
        cfg, out = trained
        assert cli.main(["similarity", "--config", cfg]) == 1
        capsys.readouterr()


class TestBenchmark:
    def test_report_shape(self, tmp_path, work):
        out = tmp_path / "bench"
        cfg = write_config(
            tmp_path / "cfg.json", work["corpus"], out,
            seeds=[0, 1], variants=["dvae", "fantom_l"],
            train={"hidden": 12, "max_epochs": 2, "batch_size": 32},
        )
        assert cli.main(["preprocess", "--config", cfg]) == 0
        assert cli.main(["benchmark", "--config", cfg]) == 0
        bench = json.loads((out / "benchmark.json").read_text())
        assert bench["seeds"] == [0, 1]
        assert set(bench["variants"]) == {"dvae", "fantom_l"}
        for stats in bench["variants"].values():
            for key in ("purity", "nmi", "tc", "td", "tq"):
                assert len(stats[key]["values"]) == 2
                assert stats[key]["mean"] == pytest.approx(np.mean(stats[key]["values"]))
        pair = bench["welch"]["dvae_vs_fantom_l"]
        for key in ("purity", "nmi", "tq"):
            assert 0.0 <= pair[key]["p"] <= 1.0

    def test_needs_two_seeds(self, tmp_path, work, capsys):
        out = tmp_path / "bench1"
        cfg = write_config(tmp_path / "cfg.json", work["corpus"], out, seeds=[0])
        assert cli.main(["benchmark", "--config", cfg]) == 2
        assert "two seeds" in last_error(capsys)


class TestVerbosity:
    def test_quiet_suppresses_progress(self, tmp_path, work, monkeypatch, capsys):
        monkeypatch.setenv(cli.ENV_LOG, "quiet")
        out = tmp_path / "q"
        cfg = write_config(tmp_path / "cfg.json", work["corpus"], out)
        assert cli.main(["preprocess", "--config", cfg]) == 0
        captured = capsys.readouterr()
        assert captured.err == ""

    def test_debug_streams_epoch_csv(self, tmp_path, work, monkeypatch, capsys):
        out = tmp_path / "d"
        cfg = write_config(tmp_path / "cfg.json", work["corpus"], out,
                           train={"hidden": 12, "max_epochs": 1, "batch_size": 32})
        assert cli.main(["preprocess", "--config", cfg]) == 0
        monkeypatch.setenv(cli.ENV_LOG, "debug")
        assert cli.main(["train", "--config", cfg]) == 0
        stdout = capsys.readouterr().out
        assert "epoch,train_loss" in stdout
