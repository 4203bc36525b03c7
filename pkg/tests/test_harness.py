"""Config handling, pipeline smoke runs, reproducibility, and the CLI."""

import json
from pathlib import Path

import numpy as np
import pytest

from slatesim.cli import main as cli_main
from slatesim.harness import (
    CONFIG_SPEC, ConfigError, EXIT_CONFIG, EXIT_OK, EXIT_STAGE,
    default_config, derive_seed, emit_metrics, load_config, parse_config_text,
    run_experiment, run_sweep,
)
from slatesim.metrics import MetricsReport

SMOKE = """
# tiny synthetic smoke setup
data.synth.users = 40
data.synth.items = 30
data.synth.days = 4
data.synth.session_len = 5
env.mode = whole_session
env.slate_size = 5
env.max_step = 5
env.hist_cap = 10
uirm.epochs = 2
agent.name = random
eval.sessions = 30
eval.lanes = 8
run.seeds = 1,2
"""


class TestConfig:
    def test_empty_text_gives_documented_defaults(self):
        cfg = parse_config_text("")
        assert cfg["env.slate_size"] == 20
        assert cfg["env.max_step"] == 20
        assert cfg["retention.lambda1"] == 0.5
        assert cfg["retention.lambda2"] == 0.75
        assert cfg["uirm.batch_size"] == 64
        assert cfg["agent.batch_size"] == 64
        assert cfg["data.source"] == "synthetic"

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config_text("env.unknown_thing = 3\n")

    def test_negative_slate_size_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("env.slate_size = -1\n")

    def test_type_mismatch_rejected(self):
        with pytest.raises(ConfigError, match="bad value"):
            parse_config_text("env.max_step = twenty\n")

    def test_search_set_enforced_for_file_values(self):
        with pytest.raises(ConfigError, match="search set"):
            parse_config_text("env.max_step = 7\n")

    def test_override_escapes_search_set(self):
        cfg = parse_config_text("", overrides={"env.max_step": "7"})
        assert cfg["env.max_step"] == 7

    def test_round_trip(self):
        cfg = parse_config_text(SMOKE)
        again = parse_config_text(cfg.serialize())
        assert again.values == cfg.values
        assert again.serialize() == cfg.serialize()

    def test_comments_and_blank_lines_ignored(self):
        cfg = parse_config_text("# comment\n\nenv.slate_size = 10  # inline\n")
        assert cfg["env.slate_size"] == 10

    def test_seeds_parse(self):
        cfg = parse_config_text("run.seeds = 7,8,9\n")
        assert cfg.seeds == (7, 8, 9)

    def test_empty_seeds_rejected(self):
        with pytest.raises(ConfigError, match="seeds"):
            parse_config_text("run.seeds = \n")


class TestSeedDerivation:
    def test_stable_and_distinct(self):
        a = derive_seed(123, "uirm", 0)
        assert a == derive_seed(123, "uirm", 0)
        assert a != derive_seed(123, "uirm", 1)
        assert a != derive_seed(123, "agent", 0)
        assert a != derive_seed(124, "uirm", 0)

    def test_is_nonnegative_64bit(self):
        for stage in ("data", "uirm", "agent"):
            v = derive_seed(0, stage, 0)
            assert 0 <= v < 2 ** 64


class TestRunExperiment:
    def test_smoke_emits_all_metric_keys(self, tmp_path):
        cfg = parse_config_text(SMOKE, overrides={"run.seeds": "1"})
        result = run_experiment(cfg, tmp_path / "run")
        assert result.status == EXIT_OK
        report = MetricsReport.from_json((tmp_path / "run" / "report.json").read_text())
        for key in ("avg_l_reward", "max_l_reward", "coverage", "ild", "depth",
                    "avg_reward", "total_reward", "return_day", "user_retention"):
            assert key in report.metrics
        assert "click" in report.auc_per_behavior

    def test_manifest_paths_exist(self, tmp_path):
        cfg = parse_config_text(SMOKE, overrides={"run.seeds": "1"})
        run_experiment(cfg, tmp_path / "run")
        manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
        for rel in manifest["artifacts"]:
            assert (tmp_path / "run" / rel).exists()
        assert (tmp_path / "run" / manifest["metrics"]).exists()

    def test_two_runs_byte_identical(self, tmp_path):
        cfg = parse_config_text(SMOKE)
        run_experiment(cfg, tmp_path / "a")
        run_experiment(cfg, tmp_path / "b")
        for name in ("report.json", "report.tsv", "manifest.json"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()

    def test_stage_failure_recorded(self, tmp_path):
        cfg = parse_config_text(SMOKE, overrides={"data.source": "/no/such/file.csv"})
        result = run_experiment(cfg, tmp_path / "run")
        assert result.status == EXIT_STAGE
        assert result.failed_stage == "data"
        failure = json.loads((tmp_path / "run" / "failure.json").read_text())
        assert failure["stage"] == "data"

    def test_trajectory_metrics_recomputable_from_log(self, tmp_path):
        from slatesim.data import load_dataset
        from slatesim.env import TrajectoryLogger
        from slatesim.harness import metrics_from_records
        from slatesim.uirm import UirmModel
        cfg = parse_config_text(SMOKE, overrides={"run.seeds": "1"})
        out = tmp_path / "run"
        run_experiment(cfg, out)
        live = json.loads((out / "seed_1" / "metrics.json").read_text())
        records = TrajectoryLogger.load(out / "seed_1" / "trajectory.jsonl")
        train = load_dataset(out / "train.bin")
        model = UirmModel.load(out / "seed_1" / "uirm.bin")
        again = metrics_from_records(records, train, model, batch=cfg["eval.batch"])
        assert again == live


class TestSweepAndEmit:
    def test_sweep_emits_one_report_per_value(self, tmp_path):
        cfg = parse_config_text(SMOKE, overrides={"run.seeds": "1",
                                                  "eval.sessions": "10"})
        results = run_sweep(cfg, "env.max_step", [5, 10], tmp_path / "sweep")
        assert all(r.status == EXIT_OK for r in results)
        dirs = sorted(p.name for p in (tmp_path / "sweep").iterdir())
        assert dirs == ["env_max_step=10", "env_max_step=5"]
        for d in dirs:
            assert (tmp_path / "sweep" / d / "report.json").exists()

    def test_emit_metrics_reemit_identical(self, tmp_path):
        report = MetricsReport.from_seed_values({"depth": [3.0, 4.0]}, {"click": 0.7})
        emit_metrics(report, tmp_path / "m1")
        emit_metrics(report, tmp_path / "m2")
        assert (tmp_path / "m1" / "report.json").read_bytes() == \
            (tmp_path / "m2" / "report.json").read_bytes()
        lines = (tmp_path / "m1" / "report.tsv").read_text().strip().split("\n")
        assert len(lines) == 1 + 1 + 1  # header + one metric + one auc row


class TestCli:
    def _write_config(self, tmp_path) -> Path:
        path = tmp_path / "smoke.cfg"
        path.write_text(SMOKE)
        return path

    def test_bad_override_exits_2(self, tmp_path, capsys):
        code = cli_main(["evaluate", "--override", "env.bogus=1",
                         "--out", str(tmp_path / "o")])
        assert code == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_synth_data_writes_container(self, tmp_path):
        cfg = self._write_config(tmp_path)
        out = tmp_path / "data"
        code = cli_main(["synth-data", "--config", str(cfg), "--out", str(out)])
        assert code == EXIT_OK
        assert (out / "dataset.bin").exists()
        assert (out / "distributions.jsonl").exists()

    def test_evaluate_full_pipeline(self, tmp_path):
        cfg = self._write_config(tmp_path)
        out = tmp_path / "run"
        code = cli_main(["evaluate", "--config", str(cfg), "--seed", "3",
                         "--out", str(out), "--override", "eval.sessions=10"])
        assert code == EXIT_OK
        assert (out / "report.json").exists()
        assert (out / "seed_3" / "trajectory.jsonl").exists()

    def test_preprocess_round_trip(self, tmp_path):
        log = tmp_path / "log.csv"
        header = ("user_id,video_id,time_ms,date,is_click,long_view,is_like,"
                  "is_comment,is_follow,is_forward,is_hate\n")
        rows = [f"{u},{i},{u * 1000 + i},{i % 3},1,0,0,0,0,0,0\n"
                for u in range(8) for i in range(6)]
        log.write_text(header + "".join(rows))
        out = tmp_path / "prep"
        code = cli_main(["preprocess", "--out", str(out),
                         "--override", f"data.source={log}",
                         "--override", "data.split_ratio=0.75"])
        assert code == EXIT_OK
        summary = json.loads((out / "ingest.json").read_text())
        assert summary["interactions"] == 48
        assert (out / "train.bin").exists() and (out / "test.bin").exists()

    def test_sweep_command(self, tmp_path):
        cfg = self._write_config(tmp_path)
        out = tmp_path / "sw"
        code = cli_main(["sweep", "--config", str(cfg), "--seed", "1",
                         "--param", "env.slate_size", "--values", "5,10",
                         "--out", str(out), "--override", "eval.sessions=8"])
        assert code == EXIT_OK
        assert (out / "env_slate_size=5" / "report.json").exists()
        assert (out / "env_slate_size=10" / "report.json").exists()

    def test_mode_and_agent_flags(self, tmp_path):
        cfg = self._write_config(tmp_path)
        out = tmp_path / "req"
        code = cli_main(["evaluate", "--config", str(cfg), "--seed", "1",
                         "--mode", "request", "--agent", "random",
                         "--out", str(out), "--override", "eval.sessions=8"])
        assert code == EXIT_OK
        report = MetricsReport.from_json((out / "report.json").read_text())
        assert report.metrics["depth"]["mean"] == 1.0
