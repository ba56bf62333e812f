import json
import os

import pytest

from ceres_rl import cli
from ceres_rl.demos import load_demos
from ceres_rl.envs import EnvConfig


def run(argv):
    assert cli.main(argv) == 0


class TestParser:
    def test_requires_subcommand(self):
        with pytest.raises(SystemExit):
            cli.build_parser().parse_args([])

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit):
            cli.build_parser().parse_args(["frobnicate"])

    def test_missing_required_argument(self):
        with pytest.raises(SystemExit):
            cli.build_parser().parse_args(["train-constraints"])


class TestPipeline:
    def test_gen_then_train_constraints(self, tmp_path):
        demo_dir = tmp_path / "demos"
        run([
            "gen-demos", "--out", str(demo_dir), "--seed", "5",
            "--trajectories", "4", "--target-ratio", "2.213",
        ])
        demo_path = demo_dir / "demos.jsonl"
        records, header = load_demos(demo_path)
        assert header["config_hash"] == EnvConfig().config_hash()
        assert header["counts"]["positive"] > 0
        assert header["counts"]["negative"] > 0
        assert (demo_dir / "config.json").exists()

        train_dir = tmp_path / "cnet"
        run([
            "train-constraints", "--out", str(train_dir),
            "--demos", str(demo_path), "--epochs", "3", "--seed", "5",
        ])
        ckpt = train_dir / "constraints.json"
        assert ckpt.exists()
        extra = json.loads(ckpt.read_text())["extra"]
        assert extra["n_in"] == 2 and extra["n_obs"] == header["n_obs"]
        history = (train_dir / "constraint_history.csv").read_text().splitlines()
        assert history[0] == "epoch,loss,accuracy"
        assert len(history) == 4  # header + 3 epochs

    def test_gen_demos_rejects_force_mode(self, tmp_path):
        cfg = EnvConfig(control_mode="force")
        cfg_path = tmp_path / "cfg.json"
        cfg.to_json(cfg_path)
        with pytest.raises(SystemExit):
            cli.main([
                "gen-demos", "--out", str(tmp_path / "x"),
                "--env-config", str(cfg_path), "--trajectories", "1",
            ])


class TestTrainRl:
    def _reduced_cfg(self, tmp_path):
        cfg_path = tmp_path / "env.json"
        EnvConfig(observation_mode="reduced").to_json(cfg_path)
        return str(cfg_path)

    def test_vanilla_metrics_written(self, tmp_path):
        cfg = self._reduced_cfg(tmp_path)
        out = tmp_path / "rl"
        run([
            "train-rl", "--out", str(out), "--env-config", cfg,
            "--iterations", "2", "--steps-per-iter", "128", "--seed", "1",
        ])
        lines = (out / "metrics.csv").read_text().splitlines()
        assert lines[0].split(",") == list(cli.METRIC_FIELDS)
        assert len(lines) == 3
        assert (out / "policy.json").exists()
        assert (out / "value.json").exists()

    def test_determinism_byte_identical(self, tmp_path):
        cfg = self._reduced_cfg(tmp_path)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            run([
                "train-rl", "--out", str(out), "--env-config", cfg,
                "--iterations", "2", "--steps-per-iter", "128", "--seed", "9",
            ])
            outs.append((out / "metrics.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_seed_changes_metrics(self, tmp_path):
        cfg = self._reduced_cfg(tmp_path)
        outs = []
        for seed in ("3", "4"):
            out = tmp_path / f"s{seed}"
            run([
                "train-rl", "--out", str(out), "--env-config", cfg,
                "--iterations", "1", "--steps-per-iter", "128", "--seed", seed,
            ])
            outs.append((out / "metrics.csv").read_bytes())
        assert outs[0] != outs[1]


class TestCeresCommand:
    def test_smoke_writes_artifacts(self, tmp_path):
        cfg_path = tmp_path / "env.json"
        EnvConfig(observation_mode="reduced").to_json(cfg_path)
        out = tmp_path / "ceres"
        run([
            "ceres", "--out", str(out), "--env-config", str(cfg_path),
            "--iterations", "2", "--steps-per-iter", "128", "--seed", "2",
        ])
        for name in ("metrics.csv", "policy_direct.json", "policy_recovery.json",
                     "constraints.json", "buffer.jsonl", "config.json"):
            assert (out / name).exists()
        records, header = load_demos(out / "buffer.jsonl")
        assert header["n_obs"] == 12  # full observation even in reduced mode


class TestEval:
    def test_random_policy_eval(self, tmp_path):
        out = tmp_path / "eval"
        run([
            "eval", "--out", str(out), "--episodes", "3", "--seed", "0",
        ])
        summary = json.loads((out / "eval.json").read_text())
        assert summary["episodes"] == 3
        assert 0.0 <= summary["failure_rate"] <= 1.0
        assert 0.0 <= summary["success_rate"] <= 1.0

    def test_eval_deterministic(self, tmp_path):
        sums = []
        for name in ("e1", "e2"):
            out = tmp_path / name
            run(["eval", "--out", str(out), "--episodes", "2", "--seed", "7"])
            sums.append((out / "eval.json").read_bytes())
        assert sums[0] == sums[1]


class TestErrorHandling:
    def test_missing_demo_file_reports_error(self, tmp_path, capsys):
        code = cli.main([
            "train-constraints", "--out", str(tmp_path / "o"),
            "--demos", str(tmp_path / "nope.jsonl"),
        ])
        assert code == 1
        assert "error:" in capsys.readouterr().err
