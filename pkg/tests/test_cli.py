import json
import os

import numpy as np
import pytest

from eduseg import cli
from eduseg import synthetic as S
from eduseg.corpus import load_corpus, write_corpus


def run(*argv):
    return cli.main(list(argv))


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Synthetic data plus a small trained checkpoint, shared by CLI tests."""
    tmp = tmp_path_factory.mktemp("cli")
    data = tmp / "data"
    assert run("synth", "--out-dir", str(data), "--train-size", "80",
               "--val-size", "20", "--test-size", "20", "--seed", "5") == 0
    ckpt = tmp / "model.ckpt"
    code = run("train",
               "--corpus", str(data / "train.txt"),
               "--val-corpus", str(data / "val.txt"),
               "--embeddings", str(data / "embeddings.txt"),
               "--output", str(ckpt),
               "--no-elmo", "--hidden", "16", "--learning-rate", "0.003",
               "--batch-size", "8", "--max-epochs", "25", "--patience", "25",
               "--seed", "1",
               "--log", str(tmp / "log.jsonl"))
    assert code == 0
    return tmp


class TestTrain:
    def test_missing_corpus_exits_2(self, tmp_path):
        code = run("train", "--corpus", str(tmp_path / "nope.txt"),
                   "--embeddings", str(tmp_path / "nope.txt"),
                   "--output", str(tmp_path / "m.ckpt"), "--no-elmo")
        assert code == 2

    def test_elmo_without_reps_exits_2(self, workdir):
        data = workdir / "data"
        code = run("train", "--corpus", str(data / "train.txt"),
                   "--embeddings", str(data / "embeddings.txt"),
                   "--output", str(workdir / "x.ckpt"),
                   "--use-elmo", "--max-epochs", "1")
        assert code == 2

    def test_metrics_log_jsonl(self, workdir):
        lines = (workdir / "log.jsonl").read_text().splitlines()
        rec = json.loads(lines[0])
        assert {"epoch", "train_nll", "val_f1"} <= set(rec)

    def test_config_file_with_flag_override(self, workdir, tmp_path):
        data = workdir / "data"
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "corpus": str(data / "train.txt"),
            "embeddings": str(data / "embeddings.txt"),
            "use_elmo": False, "hidden": 8, "max_epochs": 5, "seed": 2,
        }))
        out = tmp_path / "m.ckpt"
        # flag overrides the file's max_epochs
        code = run("train", "--config", str(cfg), "--output", str(out),
                   "--max-epochs", "1", "--log", str(tmp_path / "l.jsonl"))
        assert code == 0
        assert len((tmp_path / "l.jsonl").read_text().splitlines()) == 1

    def test_unknown_config_key_rejected(self, workdir, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"learning_rte": 0.1}))
        assert run("train", "--config", str(cfg)) == 2


class TestSegment:
    def test_output_format_and_tokens(self, workdir, tmp_path):
        data = workdir / "data"
        out = tmp_path / "pred.txt"
        code = run("segment", "--checkpoint", str(workdir / "model.ckpt"),
                   "--corpus", str(data / "test.txt"), "--output", str(out))
        assert code == 0
        gold = load_corpus(data / "test.txt")
        pred = load_corpus(out)
        assert [s.tokens for s in pred] == [s.tokens for s in gold]
        assert all(l in (0, 1) for s in pred for l in s.labels)

    def test_empty_input(self, workdir, tmp_path):
        empty = tmp_path / "empty.txt"
        empty.write_text("")
        out = tmp_path / "out.txt"
        code = run("segment", "--checkpoint", str(workdir / "model.ckpt"),
                   "--corpus", str(empty), "--output", str(out))
        assert code == 0
        assert out.read_text() == ""

    def test_deterministic(self, workdir, tmp_path):
        data = workdir / "data"
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        for out in (a, b):
            assert run("segment", "--checkpoint", str(workdir / "model.ckpt"),
                       "--corpus", str(data / "test.txt"),
                       "--output", str(out)) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_raw_token_file(self, workdir, tmp_path):
        raw = tmp_path / "raw.txt"
        raw.write_text("this\nis\nbecause\nraw\n\n")
        out = tmp_path / "out.txt"
        assert run("segment", "--checkpoint", str(workdir / "model.ckpt"),
                   "--corpus", str(raw), "--output", str(out)) == 0
        (sent,) = load_corpus(out)
        assert sent.tokens == ["this", "is", "because", "raw"]


class TestEval:
    def test_metrics_json_on_stdout(self, workdir, capsys):
        data = workdir / "data"
        code = run("eval", "--checkpoint", str(workdir / "model.ckpt"),
                   "--corpus", str(data / "test.txt"))
        assert code == 0
        metrics = json.loads(capsys.readouterr().out.strip())
        assert set(metrics) == {"precision", "recall", "f1", "tp", "fp", "fn"}
        assert metrics["f1"] > 0.5  # small model, easy task

    def test_echo_fixture_perfect_f1(self, workdir, tmp_path, capsys):
        # model predictions fed back in as gold must score 1.0
        data = workdir / "data"
        pred = tmp_path / "pred.txt"
        assert run("segment", "--checkpoint", str(workdir / "model.ckpt"),
                   "--corpus", str(data / "test.txt"), "--output", str(pred)) == 0
        assert run("eval", "--checkpoint", str(workdir / "model.ckpt"),
                   "--corpus", str(pred)) == 0
        metrics = json.loads(capsys.readouterr().out.strip())
        assert metrics["f1"] == 1.0

    def test_misaligned_reps_exit_nonzero(self, workdir, tmp_path, capsys):
        data = workdir / "data"
        sents = load_corpus(data / "test.txt")
        bad = tmp_path / "bad.rep1"
        S.write_random_reps(sents[:3], 8, 1, bad)
        code = run("eval", "--checkpoint", str(workdir / "model.ckpt"),
                   "--corpus", str(data / "test.txt"), "--reps", str(bad))
        # model has use_elmo=False so reps are ignored; exercise alignment
        # through a checkpointless path instead
        from eduseg.corpus import load_contextual_reps
        from eduseg.errors import AlignmentError
        with pytest.raises(AlignmentError):
            load_contextual_reps(bad, sents)
        assert code == 0


class TestBench:
    def test_report_and_sidecar(self, workdir, tmp_path, capsys):
        data = workdir / "data"
        sidecar = tmp_path / "bench.json"
        code = run("bench", "--checkpoint", str(workdir / "model.ckpt"),
                   "--corpus", str(data / "test.txt"),
                   "--batch-sizes", "1,4", "--repetitions", "5",
                   "--output", str(sidecar))
        assert code == 0
        out = capsys.readouterr().out
        assert "Sents/s" in out
        rows = json.loads(sidecar.read_text())
        assert [r["batch_size"] for r in rows] == [1, 4]
        assert all(len(r["samples"]) == 5 for r in rows)
        # speedup of the first row is exactly 1.0x
        assert " 1.0x" in out.splitlines()[1]

    def test_refuses_on_decode_mismatch(self, workdir, monkeypatch, capsys):
        from eduseg.model import SegmenterModel
        data = workdir / "data"
        original = SegmenterModel.decode

        def flaky(self, batch):
            labels = original(self, batch)
            if batch.size > 1:
                labels[0] = [1 - l for l in labels[0]]
            return labels

        monkeypatch.setattr(SegmenterModel, "decode", flaky)
        code = run("bench", "--checkpoint", str(workdir / "model.ckpt"),
                   "--corpus", str(data / "test.txt"), "--batch-sizes", "1,4")
        assert code == 1
        assert "refusing" in capsys.readouterr().err


class TestSynth:
    def test_rep_files_align(self, tmp_path):
        out = tmp_path / "d"
        assert run("synth", "--out-dir", str(out), "--train-size", "5",
                   "--val-size", "2", "--test-size", "2", "--rep-dim", "6") == 0
        from eduseg.corpus import load_contextual_reps
        sents = load_corpus(out / "train.txt")
        reps = load_contextual_reps(out / "train.rep1", sents)
        assert len(reps) == 5 and reps[0].shape[0] == 3
