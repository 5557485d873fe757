from __future__ import annotations

import json

import pytest

from maintlab.cli import dispatch
from maintlab.corpus import load_dataset
from maintlab.experiment import GeneratorStrategy, GeneratorKind, RunManifest, RunStore, phase1, run_phase2
from maintlab.gateway import Cassette, CassetteMode, LlmGateway


@pytest.fixture
def metrics_file(tmp_path, golden_dir):
    return str(golden_dir / "branchy.py")


class TestExitCodes:
    def test_unknown_verb_is_usage_error(self, capsys):
        assert dispatch(["frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_no_verb_is_usage_error(self):
        assert dispatch([]) == 1

    def test_missing_file_is_user_error(self, capsys):
        assert dispatch(["metrics", "/tmp/definitely-not-here.py"]) == 1
        assert "error" in capsys.readouterr().err

    def test_syntax_error_in_input_is_user_error(self, tmp_path):
        bad = tmp_path / "bad.py"
        bad.write_text("def f(:", encoding="utf-8")
        assert dispatch(["metrics", str(bad)]) == 1

    def test_replay_mode_requires_cassette(self, tmp_path, replay_dir):
        code = dispatch(
            [
                "eval-run",
                "--dataset",
                str(replay_dir / "dataset.jsonl"),
                "--strategy",
                "direct",
                "--model",
                "m",
                "--run",
                str(tmp_path / "run"),
                "--cassette-mode",
                "replay",
            ]
        )
        assert code == 1

    def test_internal_error_is_exit_two(self, monkeypatch, metrics_file):
        import maintlab.cli as cli

        monkeypatch.setattr(
            cli, "static_report", lambda source: (_ for _ in ()).throw(RuntimeError("boom"))
        )
        assert dispatch(["metrics", metrics_file]) == 2

    def test_help_exits_zero(self):
        assert dispatch(["--help"]) == 0


class TestMetricsCommand:
    def test_text_output_matches_computed_values(self, capsys, metrics_file):
        assert dispatch(["metrics", metrics_file]) == 0
        out = capsys.readouterr().out
        # branchy.py: one block with CC 3; golden values frozen by hand count
        assert "cyclomatic_complexity  3.0000" in out
        assert "sloc                   7" in out

    def test_json_output(self, capsys, metrics_file):
        assert dispatch(["metrics", metrics_file, "--format", "json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["cyclomatic_complexity"] == 3.0
        assert payload["sloc"] == 7

    def test_env_option_precedence(self, capsys, metrics_file, monkeypatch):
        monkeypatch.setenv("MAINTLAB_FORMAT", "json")
        dispatch(["metrics", metrics_file])
        json.loads(capsys.readouterr().out)  # env switched the format

    def test_flag_beats_env(self, capsys, metrics_file, monkeypatch):
        monkeypatch.setenv("MAINTLAB_FORMAT", "json")
        dispatch(["metrics", metrics_file, "--format", "text"])
        assert "maintainability_index" in capsys.readouterr().out

    def test_config_file_lowest_precedence(self, capsys, metrics_file, tmp_path):
        config = tmp_path / "conf.json"
        config.write_text('{"format": "json"}', encoding="utf-8")
        dispatch(["metrics", metrics_file, "--config", str(config)])
        json.loads(capsys.readouterr().out)


class TestRunCommands:
    def test_eval_probe_report_over_replay_fixture(self, tmp_path, replay_dir, capsys):
        run_dir = str(tmp_path / "run")
        common = ["--cassette", str(replay_dir / "cassette.jsonl"), "--cassette-mode", "replay"]
        assert (
            dispatch(
                [
                    "eval-run",
                    "--dataset",
                    str(replay_dir / "dataset.jsonl"),
                    "--strategy",
                    "direct",
                    "--model",
                    "stub-model",
                    "--probe-model",
                    "stub-probe",
                    "--run",
                    run_dir,
                    "--run-id",
                    "replay-fixture",
                    "--samples",
                    "5",
                    "--k",
                    "5",
                ]
                + common
            )
            == 0
        )
        assert (
            dispatch(
                ["probe", "--dataset", str(replay_dir / "dataset.jsonl"), "--run", run_dir]
                + common
            )
            == 0
        )
        assert dispatch(["report", "--run", run_dir]) == 0
        out = capsys.readouterr().out
        header = out.splitlines()[-2]
        assert header.split(",") == [
            "strategy",
            "model",
            "mi",
            "cc",
            "pass_at_5",
            "ast_sim",
            "code_diff_per",
            "code_diff_abs",
        ]

    def test_report_json_format(self, tmp_path, replay_dir, capsys):
        # build a run through the API, then report through the CLI
        dataset = load_dataset(replay_dir / "dataset.jsonl")
        store = RunStore(tmp_path / "run")
        gateway = LlmGateway(
            cassette=Cassette(replay_dir / "cassette.jsonl", mode=CassetteMode.REPLAY)
        )
        manifest = RunManifest(
            run_id="replay-fixture",
            dataset_name="fixture3",
            strategy_kind="direct",
            strategy_model="stub-model",
            probe_model="stub-probe",
            samples=5,
            k_values=(5,),
            created_at=0.0,
        )
        phase1(
            dataset,
            GeneratorStrategy(kind=GeneratorKind.DIRECT, model_id="stub-model"),
            manifest,
            gateway,
            store,
            clock=lambda: 0.0,
        )
        run_phase2(dataset, store, gateway)
        capsys.readouterr()
        assert dispatch(["report", "--run", str(tmp_path / "run"), "--format", "json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert "pass_at_5" in payload
        assert "maintenance_estimate" in payload
