from __future__ import annotations

import json
from pathlib import Path

import pytest

from icll.cli import main
from icll.scorer import MockScorer

from brute import brute_fused_choices
from util import write_jsonl, write_manifest

DATA_DIR = Path(__file__).parent / "data"


def run(*argv) -> int:
    return main([str(a) for a in argv])


def _plain_dataset(tmp_path, with_refs=True, with_audio=False):
    train = [
        {"id": f"s{i}", "text": f"kala pemi {i}", "text_embedding": [1.0, 0.5 * i, 1.0]}
        for i in range(4)
    ]
    nbest = []
    for i in range(3):
        row = {
            "utt_id": f"u{i}",
            "hypotheses": [
                {"text": f"kala pemi {i}", "am_logprobs": [-1.0, -0.5]},
                {"text": f"kela pomi {i}", "am_logprobs": [-2.0]},
            ],
        }
        if with_refs:
            row["reference"] = f"kala pemi {i}"
        if with_audio:
            row["audio_embedding"] = [1.0, 0.0, 0.0]
        nbest.append(row)
    write_jsonl(tmp_path / "train.jsonl", train)
    write_jsonl(tmp_path / "nbest.jsonl", nbest)
    return write_manifest(tmp_path)


class TestValidate:
    def test_valid_dataset_exit_zero(self, tmp_path, capsys):
        m = _plain_dataset(tmp_path)
        assert run("validate", "--manifest", m) == 0
        out = capsys.readouterr().out
        assert "train samples: 4" in out
        # No audio embeddings anywhere: validation succeeds with a warning.
        assert "status: warning" in out

    def test_missing_nbest_exit_two(self, tmp_path):
        m = _plain_dataset(tmp_path)
        (tmp_path / "nbest.jsonl").unlink()
        assert run("validate", "--manifest", m) == 2

    def test_audio_strategy_unavailable_exit_one(self, tmp_path, capsys):
        m = _plain_dataset(tmp_path)
        assert run("validate", "--manifest", m, "--strategy", "example-audio") == 1
        assert "unavailable" in capsys.readouterr().out


class TestPpl:
    def test_sweep_columns_and_determinism(self, mini_fixture, tmp_path):
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        for out in (out1, out2):
            code = run(
                "ppl",
                "--manifest", mini_fixture.manifest_path,
                "--strategy", "example-hyp",
                "--sweep", "0", "1", "5",
                "--scorer", "mock",
                "--seed", "3",
                "--embed-cache", mini_fixture.cache_path,
                "--out-dir", out,
            )
            assert code == 0
        report = json.loads((out1 / "ppl.json").read_text())
        assert report["cols"] == ["0", "1", "5"]
        assert (out1 / "ppl.csv").read_bytes() == (out2 / "ppl.csv").read_bytes()
        assert (out1 / "ppl.json").read_bytes() == (out2 / "ppl.json").read_bytes()

    def test_zero_shot_baseline_uniform(self, mini_fixture, tmp_path):
        code = run(
            "ppl",
            "--manifest", mini_fixture.manifest_path,
            "--strategy", "random",
            "--sweep", "0",
            "--scorer", "uniform",
            "--out-dir", tmp_path / "o",
        )
        assert code == 0
        report = json.loads((tmp_path / "o" / "ppl.json").read_text())
        assert report["cells"][0]["value"] == pytest.approx(256.0, abs=1e-9)

    def test_oracle_strategy_without_refs_fails(self, tmp_path):
        m = _plain_dataset(tmp_path, with_refs=False)
        code = run(
            "ppl",
            "--manifest", m,
            "--strategy", "example-oracle",
            "--sweep", "0",
            "--out-dir", tmp_path / "o",
        )
        assert code == 1


class TestRerank:
    def test_acoustic_mode_wer_is_rank_zero_wer(self, mini_fixture, tmp_path):
        out = tmp_path / "o"
        code = run(
            "rerank",
            "--manifest", mini_fixture.manifest_path,
            "--modes", "acoustic",
            "--out-dir", out,
        )
        assert code == 0
        from icll.evaluate import corpus_wer

        expect = corpus_wer(
            [(t.reference, t.best.text) for t in mini_fixture.tests]
        ).wer
        report = json.loads((out / "wer.json").read_text())
        cell = [c for c in report["cells"] if c["col"] == "acoustic"][0]
        assert cell["value"] == pytest.approx(expect, abs=1e-12)

    def test_oracle_dominates_acoustic(self, mini_fixture, tmp_path):
        out = tmp_path / "o"
        code = run(
            "rerank",
            "--manifest", mini_fixture.manifest_path,
            "--modes", "acoustic", "oracle-wer",
            "--out-dir", out,
        )
        assert code == 0
        report = json.loads((out / "wer.json").read_text())
        by_col = {c["col"]: c["value"] for c in report["cells"]}
        assert by_col["oracle-wer"] <= by_col["acoustic"]

    def test_fused_matches_brute_force_and_golden(self, mini_fixture, tmp_path):
        out = tmp_path / "o"
        code = run(
            "rerank",
            "--manifest", mini_fixture.manifest_path,
            "--strategy", "example-hyp",
            "--num-samples", "5",
            "--modes", "fused",
            "--scorer", "mock",
            "--seed", "3",
            "--embed-cache", mini_fixture.cache_path,
            "--out-dir", out,
        )
        assert code == 0
        produced = (out / "rerank_fused.jsonl").read_text(encoding="utf-8")
        rows = [json.loads(line) for line in produced.splitlines()]
        expect = brute_fused_choices(mini_fixture, MockScorer(seed=3), num_samples=5)
        assert {r["utt_id"]: r["chosen"] for r in rows} == expect
        golden = (DATA_DIR / "golden_rerank_fused.jsonl").read_text(encoding="utf-8")
        assert produced == golden

    def test_instruction_mode_runs_with_mock(self, mini_fixture, tmp_path):
        out = tmp_path / "o"
        code = run(
            "rerank",
            "--manifest", mini_fixture.manifest_path,
            "--strategy", "example-hyp",
            "--num-samples", "2",
            "--modes", "instruction",
            "--scorer", "mock",
            "--embed-cache", mini_fixture.cache_path,
            "--out-dir", out,
        )
        assert code == 0
        rows = [json.loads(l) for l in (out / "rerank_instruction.jsonl").read_text().splitlines()]
        assert len(rows) == len(mini_fixture.tests)
        assert all(0 <= r["chosen"] < 10 for r in rows)


class TestTrainNgram:
    def test_arpa_written_with_all_orders(self, tmp_path, capsys):
        m = _plain_dataset(tmp_path)
        out = tmp_path / "o"
        assert run("train-ngram", "--manifest", m, "--out-dir", out) == 0
        text = (out / "toy.arpa").read_text()
        for order in range(1, 6):
            assert f"\\{order}-grams:" in text
        assert "training perplexity" in capsys.readouterr().out

    def test_retrain_byte_identical(self, tmp_path):
        m = _plain_dataset(tmp_path)
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        run("train-ngram", "--manifest", m, "--out-dir", out1)
        run("train-ngram", "--manifest", m, "--out-dir", out2)
        assert (out1 / "toy.arpa").read_bytes() == (out2 / "toy.arpa").read_bytes()

    def test_order_flag(self, tmp_path):
        m = _plain_dataset(tmp_path)
        out = tmp_path / "o"
        assert run("train-ngram", "--manifest", m, "--ngram-order", "2", "--out-dir", out) == 0
        text = (out / "toy.arpa").read_text()
        assert "\\2-grams:" in text and "\\3-grams:" not in text


class TestConfigPrecedence:
    def test_flags_beat_config_beat_defaults(self, tmp_path, mini_fixture):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(
            json.dumps(
                {
                    "manifest": str(mini_fixture.manifest_path),
                    "strategy": "random",
                    "sweep": [0, 2],
                    "scorer": "uniform",
                    "out_dir": str(tmp_path / "from_config"),
                }
            )
        )
        code = run("ppl", "--config", cfg_path, "--sweep", "0")
        assert code == 0
        report = json.loads((tmp_path / "from_config" / "ppl.json").read_text())
        assert report["cols"] == ["0"]  # flag overrode config sweep

    def test_env_endpoint_used(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ICLL_SCORER_URL", "http://127.0.0.1:1")
        m = _plain_dataset(tmp_path)
        # Remote scorer pointed at a dead endpoint: utterances get excluded
        # and the command reports a run-level failure.
        code = run(
            "ppl",
            "--manifest", m,
            "--strategy", "random",
            "--sweep", "0",
            "--scorer", "remote",
            "--out-dir", tmp_path / "o",
        )
        assert code == 1

    def test_bad_sweep_rejected(self, tmp_path):
        m = _plain_dataset(tmp_path)
        assert run("ppl", "--manifest", m, "--sweep", "5", "1", "--out-dir", tmp_path / "o") == 2


class TestEmbedCache:
    def test_needs_endpoint(self, tmp_path):
        m = _plain_dataset(tmp_path)
        assert run("embed-cache", "--manifest", m, "--embed-cache", tmp_path / "c.jsonl") == 2


class TestJobs:
    def test_parallel_run_byte_identical_to_sequential(self, mini_fixture, tmp_path):
        outs = []
        for jobs, out in (("1", tmp_path / "seq"), ("4", tmp_path / "par")):
            code = run(
                "rerank",
                "--manifest", mini_fixture.manifest_path,
                "--strategy", "example-hyp",
                "--num-samples", "5",
                "--modes", "fused",
                "--scorer", "mock",
                "--seed", "3",
                "--jobs", jobs,
                "--embed-cache", mini_fixture.cache_path,
                "--out-dir", out,
            )
            assert code == 0
            outs.append((out / "rerank_fused.jsonl").read_bytes())
        assert outs[0] == outs[1]

    def test_ppl_parallel_matches_sequential(self, mini_fixture, tmp_path):
        reports = []
        for jobs, out in (("1", tmp_path / "seq"), ("3", tmp_path / "par")):
            code = run(
                "ppl",
                "--manifest", mini_fixture.manifest_path,
                "--strategy", "example-hyp",
                "--sweep", "0", "5",
                "--scorer", "mock",
                "--seed", "3",
                "--jobs", jobs,
                "--embed-cache", mini_fixture.cache_path,
                "--out-dir", out,
            )
            assert code == 0
            reports.append((out / "ppl.json").read_bytes())
        assert reports[0] == reports[1]


class TestMetaIsolation:
    def test_timestamps_confined_to_meta(self, mini_fixture, tmp_path):
        out = tmp_path / "o"
        run(
            "ppl",
            "--manifest", mini_fixture.manifest_path,
            "--strategy", "random",
            "--sweep", "0", "1",
            "--scorer", "mock",
            "--out-dir", out,
        )
        assert (out / "run_meta.json").exists()
        for name in ("ppl.csv", "ppl.json"):
            content = (out / name).read_text()
            assert "timestamp" not in content
