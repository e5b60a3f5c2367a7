from __future__ import annotations

import numpy as np
import pytest

from icll.corpus import (
    Hypothesis,
    NBestList,
    TrainSample,
    dump_nbest,
    dump_train_corpus,
    load_manifest,
    load_nbest,
    load_train_corpus,
    validate_dataset,
)
from icll.errors import (
    DegenerateEmbedding,
    DimMismatch,
    DuplicateId,
    EmptyNBest,
    InvalidLogProb,
)

from util import write_jsonl, write_manifest


def _manifest(tmp_path, train_rows, nbest_rows, dim=3):
    write_jsonl(tmp_path / "train.jsonl", train_rows)
    write_jsonl(tmp_path / "nbest.jsonl", nbest_rows)
    return load_manifest(write_manifest(tmp_path, embedding_dim=dim))


GOOD_NBEST = [
    {
        "utt_id": "u1",
        "reference": "a b",
        "hypotheses": [{"text": "a b", "am_logprobs": [-1.0, -2.0]}],
    }
]


class TestLoadTrain:
    def test_two_lines_order_preserved(self, tmp_path):
        rows = [
            {"id": "s1", "text": "hello there", "text_embedding": [1.0, 0.0, 0.0]},
            {"id": "s2", "text": "more text", "text_embedding": [0.0, 1.0, 0.0]},
        ]
        train = load_train_corpus(_manifest(tmp_path, rows, GOOD_NBEST))
        assert [s.id for s in train] == ["s1", "s2"]
        assert train[0].text == "hello there"

    def test_duplicate_id(self, tmp_path):
        rows = [{"id": "s1", "text": "x"}, {"id": "s1", "text": "y"}]
        with pytest.raises(DuplicateId):
            load_train_corpus(_manifest(tmp_path, rows, GOOD_NBEST))

    def test_dim_mismatch_vs_manifest(self, tmp_path):
        rows = [{"id": "s1", "text": "x", "text_embedding": [1.0, 0.0, 0.0, 0.0]}]
        with pytest.raises(DimMismatch):
            load_train_corpus(_manifest(tmp_path, rows, GOOD_NBEST, dim=3))

    def test_zero_norm_embedding_rejected(self, tmp_path):
        rows = [{"id": "s1", "text": "x", "text_embedding": [0.0, 0.0, 0.0]}]
        with pytest.raises(DegenerateEmbedding):
            load_train_corpus(_manifest(tmp_path, rows, GOOD_NBEST))

    def test_text_audio_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            TrainSample(
                id="s1",
                text="x",
                text_embedding=np.array([1.0, 0.0]),
                audio_embedding=np.array([1.0, 0.0, 0.0]),
            )

    def test_nfc_applied(self, tmp_path):
        decomposed = "é"  # e + combining acute
        rows = [{"id": "s1", "text": decomposed}]
        train = load_train_corpus(_manifest(tmp_path, rows, GOOD_NBEST))
        assert train[0].text == "é"


class TestLoadNBest:
    def test_sorted_descending(self, tmp_path):
        rows = [
            {
                "utt_id": "u1",
                "hypotheses": [
                    {"text": "c", "am_logprobs": [-5.0]},
                    {"text": "a", "am_logprobs": [-3.0]},
                    {"text": "b", "am_logprobs": [-4.0]},
                ],
            }
        ]
        (nb,) = load_nbest(_manifest(tmp_path, [{"id": "s", "text": "t"}], rows))
        assert [h.am_total for h in nb.hypotheses] == [-3.0, -4.0, -5.0]
        assert [h.text for h in nb.hypotheses] == ["a", "b", "c"]

    def test_cap_drops_two_lowest(self, tmp_path):
        hyps = [{"text": f"h{i}", "am_logprobs": [-float(i)]} for i in range(1, 13)]
        rows = [{"utt_id": "u1", "hypotheses": hyps}]
        (nb,) = load_nbest(_manifest(tmp_path, [{"id": "s", "text": "t"}], rows))
        assert len(nb.hypotheses) == 10
        assert min(h.am_total for h in nb.hypotheses) == -10.0  # -11, -12 dropped

    def test_cap_override(self, tmp_path):
        hyps = [{"text": f"h{i}", "am_logprobs": [-float(i)]} for i in range(1, 13)]
        rows = [{"utt_id": "u1", "hypotheses": hyps}]
        (nb,) = load_nbest(_manifest(tmp_path, [{"id": "s", "text": "t"}], rows), cap=None)
        assert len(nb.hypotheses) == 12

    def test_positive_logprob(self, tmp_path):
        rows = [{"utt_id": "u1", "hypotheses": [{"text": "h", "am_logprobs": [0.5]}]}]
        with pytest.raises(InvalidLogProb):
            load_nbest(_manifest(tmp_path, [{"id": "s", "text": "t"}], rows))

    def test_empty_hypothesis_list(self, tmp_path):
        rows = [{"utt_id": "u1", "hypotheses": []}]
        with pytest.raises(EmptyNBest):
            load_nbest(_manifest(tmp_path, [{"id": "s", "text": "t"}], rows))

    def test_ties_keep_input_order(self):
        hyps = [
            Hypothesis.from_logprobs("first", [-2.0]),
            Hypothesis.from_logprobs("second", [-2.0]),
            Hypothesis.from_logprobs("third", [-1.0]),
        ]
        nb = NBestList.from_hypotheses("u", hyps)
        assert [h.text for h in nb.hypotheses] == ["third", "first", "second"]

    def test_best_is_max(self, tmp_path):
        rows = [
            {
                "utt_id": "u1",
                "hypotheses": [
                    {"text": "a", "am_logprobs": [-3.0, -1.0]},
                    {"text": "b", "am_logprobs": [-0.5]},
                ],
            }
        ]
        (nb,) = load_nbest(_manifest(tmp_path, [{"id": "s", "text": "t"}], rows))
        assert nb.best.am_total == max(h.am_total for h in nb.hypotheses)


class TestHypothesis:
    def test_am_total_is_sum(self):
        h = Hypothesis.from_logprobs("x", [-1.5, -2.25])
        assert h.am_total == pytest.approx(-3.75, abs=1e-12)

    def test_cached_total_checked(self):
        with pytest.raises(InvalidLogProb):
            Hypothesis(text="x", am_logprobs=(-1.0, -1.0), am_total=-3.0)

    def test_single_element_total_only(self):
        h = Hypothesis.from_logprobs("x", [-4.0])
        assert h.am_total == -4.0


class TestRoundTrip:
    def test_serialize_load_bit_exact(self, tmp_path):
        rows = [
            {
                "id": "s1",
                "text": "kala pemi",
                "text_embedding": [0.1234567890123456, -1.9876543210987654e-7, 3.0],
                "audio_embedding": [1e-300, 2.5, -3.75],
            },
            {"id": "s2", "text": "tu"},
        ]
        nbest = [
            {
                "utt_id": "u1",
                "reference": "kala",
                "audio_embedding": [0.5, 0.25, -0.125],
                "hypotheses": [
                    {"text": "kala", "am_logprobs": [-0.1, -0.7000000000000001]},
                    {"text": "kela", "am_logprobs": [-1.0]},
                ],
            }
        ]
        m = _manifest(tmp_path, rows, nbest)
        train = load_train_corpus(m)
        tests = load_nbest(m)

        dump_train_corpus(train, tmp_path / "train2.jsonl")
        dump_nbest(tests, tmp_path / "nbest2.jsonl")
        m2 = load_manifest(
            write_manifest(tmp_path, train_name="train2.jsonl", nbest_name="nbest2.jsonl")
        )
        train2 = load_train_corpus(m2)
        tests2 = load_nbest(m2)

        assert [s.id for s in train2] == [s.id for s in train]
        assert [s.text for s in train2] == [s.text for s in train]
        for a, b in zip(train, train2):
            if a.text_embedding is None:
                assert b.text_embedding is None
            else:
                assert a.text_embedding.tolist() == b.text_embedding.tolist()
        assert tests2[0].reference == tests[0].reference
        for ha, hb in zip(tests[0].hypotheses, tests2[0].hypotheses):
            assert ha.text == hb.text
            assert ha.am_logprobs == hb.am_logprobs
            assert ha.am_total == hb.am_total


class TestValidate:
    def _sample(self, i, text_emb=True, audio_emb=True):
        return TrainSample(
            id=f"s{i}",
            text="kala",
            text_embedding=np.array([1.0, 0.0]) if text_emb else None,
            audio_embedding=np.array([0.0, 1.0]) if audio_emb else None,
        )

    def _utt(self, ref="kala", audio=True):
        return NBestList.from_hypotheses(
            "u1",
            [Hypothesis.from_logprobs("kala", [-1.0])],
            reference=ref,
            audio_embedding=np.array([1.0, 1.0]) if audio else None,
        )

    def test_all_present_ok(self):
        rep = validate_dataset([self._sample(0)], [self._utt()])
        assert rep.ok and rep.severity == "ok" and not rep.warnings

    def test_no_audio_flags_audio_strategies(self):
        rep = validate_dataset([self._sample(0, audio_emb=False)], [self._utt(audio=False)])
        assert rep.ok
        assert "ExampleAudio" in rep.unavailable_strategies
        assert "ExampleHypAudio" in rep.unavailable_strategies

    def test_empty_train_fatal(self):
        rep = validate_dataset([], [self._utt()])
        assert not rep.ok and rep.severity == "fatal"

    def test_missing_reference_blocks_oracle(self):
        rep = validate_dataset([self._sample(0)], [self._utt(ref=None)])
        assert "ExampleOracle" in rep.unavailable_strategies
        assert "OracleWer" in rep.unavailable_strategies
