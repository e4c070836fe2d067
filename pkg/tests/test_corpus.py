import json

import numpy as np
import pytest

from eduseg import corpus as C
from eduseg.corpus import (PAD_ID, Sentence, UNK_ID, build_vocab, load_corpus,
                           load_contextual_reps, load_word_embeddings,
                           make_batches, write_contextual_reps, write_corpus)
from eduseg.errors import (AlignmentError, FormatError, ParseError,
                           ValidationError)


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadCorpus:
    def test_boundary_sentence(self, tmp_path):
        f = write(tmp_path / "c.txt",
                  "Mr.\t0\nRambo\t0\nsays\t0\nthat\t1\nit\t0\n\n")
        (sent,) = load_corpus(f)
        assert sent.tokens[3] == "that"
        assert sent.labels == [0, 0, 0, 1, 0]

    def test_one_token_sentence(self, tmp_path):
        f = write(tmp_path / "c.txt", "Hello\t0\n\n")
        (sent,) = load_corpus(f)
        assert len(sent) == 1 and sent.labels == [0]

    def test_round_trip_bytes(self, tmp_path):
        text = "a\t0\nb\t1\n\nc\t0\n\n"
        f = write(tmp_path / "c.txt", text)
        out = tmp_path / "out.txt"
        write_corpus(load_corpus(f), out)
        assert out.read_bytes() == f.read_bytes()

    def test_bad_label_reports_line(self, tmp_path):
        f = write(tmp_path / "c.txt", "a\t0\nb\t2\n\n")
        with pytest.raises(ParseError, match=":2:"):
            load_corpus(f)

    def test_boundary_at_position_zero_rejected(self, tmp_path):
        f = write(tmp_path / "c.txt", "a\t1\nb\t0\n\n")
        with pytest.raises(ValidationError):
            load_corpus(f)

    def test_overlong_sentence_rejected(self, tmp_path):
        body = "".join("tok\t0\n" for _ in range(11)) + "\n"
        f = write(tmp_path / "c.txt", body)
        with pytest.raises(ValidationError, match="cap"):
            load_corpus(f, max_len=10)

    def test_sentence_invariants(self):
        with pytest.raises(ValidationError):
            Sentence([], [])
        with pytest.raises(ValidationError):
            Sentence(["a"], [1])
        with pytest.raises(ValidationError):
            Sentence(["a", "b"], [0])


class TestBuildVocab:
    def test_min_count_threshold(self):
        vocab = build_vocab([Sentence(["a", "a", "b"], [0, 0, 0])], min_count=2)
        assert vocab.itos[2:] == ["a"]

    def test_min_count_one_keeps_all(self):
        vocab = build_vocab([Sentence(["a", "b"], [0, 0])], min_count=1)
        assert vocab.itos[2:] == ["a", "b"]

    def test_tie_breaks_lexicographic(self):
        vocab = build_vocab([Sentence(["b", "a"], [0, 0])])
        assert vocab.itos[2:] == ["a", "b"]

    def test_deterministic(self, rng):
        sents = [Sentence([str(rng.choice(list("pqrs"))) for _ in range(5)],
                          [0, 0, 0, 0, 0]) for _ in range(20)]
        assert build_vocab(sents).itos == build_vocab(sents).itos

    def test_unknown_token_maps_to_unk(self):
        vocab = build_vocab([Sentence(["a"], [0])])
        assert vocab.id_of("zzz") == UNK_ID


class TestEmbeddings:
    def test_direct_read(self, tmp_path):
        f = write(tmp_path / "e.txt", "the 0.1 0.2\n")
        vocab = build_vocab([Sentence(["the"], [0])])
        table = load_word_embeddings(f, vocab)
        assert table.dim == 2
        assert np.allclose(table.matrix[vocab.id_of("the")], [0.1, 0.2])
        assert not table.trainable

    def test_absent_token_zero_row(self, tmp_path):
        f = write(tmp_path / "e.txt", "other 1.0 1.0\n")
        vocab = build_vocab([Sentence(["the"], [0])])
        table = load_word_embeddings(f, vocab)
        assert np.all(table.matrix[vocab.id_of("the")] == 0)

    def test_pad_and_unk_rows_zero(self, tmp_path):
        f = write(tmp_path / "e.txt", "<pad> 9 9\n<unk> 9 9\na 1 2\n")
        vocab = build_vocab([Sentence(["a"], [0])])
        table = load_word_embeddings(f, vocab)
        assert np.all(table.matrix[PAD_ID] == 0)
        assert np.all(table.matrix[UNK_ID] == 0)

    def test_dimension_mismatch(self, tmp_path):
        f = write(tmp_path / "e.txt", "a 1 2\nb 1 2 3\n")
        with pytest.raises(FormatError, match=":2:"):
            load_word_embeddings(f, build_vocab([Sentence(["a"], [0])]))

    def test_non_numeric(self, tmp_path):
        f = write(tmp_path / "e.txt", "a 1 x\n")
        with pytest.raises(ParseError, match=":1:"):
            load_word_embeddings(f, build_vocab([Sentence(["a"], [0])]))


class TestContextualReps:
    def test_declared_layout(self, tmp_path):
        arr = np.arange(24, dtype=np.float32).reshape(3, 2, 4)
        path = tmp_path / "r.rep1"
        write_contextual_reps([arr], path)
        (loaded,) = load_contextual_reps(path)
        assert np.array_equal(loaded, arr)
        raw = path.read_bytes()
        assert raw[:4] == b"REP1"
        payload = np.frombuffer(raw[20:], dtype="<f4")
        assert np.array_equal(payload, np.arange(24, dtype=np.float32))

    def test_alignment_error(self, tmp_path, rng):
        arr = rng.standard_normal((3, 2, 4)).astype(np.float32)
        path = tmp_path / "r.rep1"
        write_contextual_reps([arr], path)
        with pytest.raises(AlignmentError):
            load_contextual_reps(path, [Sentence(["a"], [0]), Sentence(["b"], [0])])
        with pytest.raises(AlignmentError, match="sentence 0"):
            load_contextual_reps(path, [Sentence(["a", "b", "c"], [0, 0, 0])])

    def test_round_trip_bit_exact(self, tmp_path, rng):
        reps = [rng.standard_normal((3, t, 5)).astype(np.float32)
                for t in (1, 4, 7)]
        path = tmp_path / "r.rep1"
        write_contextual_reps(reps, path)
        loaded = load_contextual_reps(path)
        for a, b in zip(reps, loaded):
            assert a.tobytes() == b.tobytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "r.rep1"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(FormatError, match="magic"):
            load_contextual_reps(path)

    def test_jsonl_variant_identical(self, tmp_path, rng):
        reps = [rng.standard_normal((3, t, 4)).astype(np.float32) for t in (2, 3)]
        bin_path = tmp_path / "r.rep1"
        write_contextual_reps(reps, bin_path)
        jsonl_path = tmp_path / "r.jsonl"
        with open(jsonl_path, "w") as f:
            for arr in reps:
                f.write(json.dumps({"layers": arr.astype(float).tolist()}) + "\n")
        from_bin = load_contextual_reps(bin_path)
        from_jsonl = load_contextual_reps(jsonl_path)
        for a, b in zip(from_bin, from_jsonl):
            assert np.array_equal(a, b)


class TestMakeBatches:
    def make_sents(self, lengths):
        return [Sentence([f"t{i}" for i in range(n)], [0] * n) for n in lengths]

    def test_batch_sizes(self):
        sents = self.make_sents([3, 3, 3, 3, 3])
        vocab = build_vocab(sents)
        batches = make_batches(sents, None, 2, vocab)
        assert [b.size for b in batches] == [2, 2, 1]

    def test_padding_and_mask(self):
        sents = self.make_sents([3, 5])
        vocab = build_vocab(sents)
        (batch,) = make_batches(sents, None, 2, vocab)
        assert batch.max_len == 5
        assert batch.mask[0].tolist() == [True] * 3 + [False] * 2
        assert (batch.token_ids[0, 3:] == PAD_ID).all()
        assert (batch.labels[0, 3:] == 0).all()

    def test_padded_reps_zero(self, rng):
        sents = self.make_sents([2, 4])
        vocab = build_vocab(sents)
        reps = [rng.standard_normal((3, len(s), 4)).astype(np.float32)
                for s in sents]
        (batch,) = make_batches(sents, reps, 2, vocab)
        assert np.all(batch.reps[0, :, 2:, :] == 0)

    def test_shuffle_deterministic(self):
        sents = self.make_sents([2] * 10)
        vocab = build_vocab(sents)
        a = make_batches(sents, None, 3, vocab, shuffle_seed=4)
        b = make_batches(sents, None, 3, vocab, shuffle_seed=4)
        for ba, bb in zip(a, b):
            assert np.array_equal(ba.token_ids, bb.token_ids)

    def test_no_seed_preserves_order(self):
        sents = self.make_sents([1, 2, 3])
        vocab = build_vocab(sents)
        batches = make_batches(sents, None, 3, vocab)
        assert batches[0].lengths == [1, 2, 3]
