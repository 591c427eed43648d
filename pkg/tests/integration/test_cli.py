import json

import pandas as pd
import pytest
from typer.testing import CliRunner

from marginclip.cli import EXIT_STAGE_FAILURE, app

CONFIG = """
[data]
classes = 3
height = 8
width = 8
train_per_class = 60
test_per_class = 20
noise_sigma = 0.03
clean_fraction = 0.25

[attack]
mode = "all2one"
trigger = "patch"
poison_rate = 0.1

[train]
epochs = 2
batch_size = 32

[mmac]
t_max = 3
refresh_period = 2
maxima_per_class = 2
ascent_steps = 3

[adaptive]
outer_rounds = 1
finetune_steps_per_round = 2

[experiment]
name = "cli"
"""


@pytest.fixture
def config_file(temp_dir):
    path = temp_dir / "marginclip.toml"
    path.write_text(CONFIG)
    return path


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, config_file, run_dir, *args):
    result = runner.invoke(app, [*args, "--config", str(config_file), "--run-dir", str(run_dir)])
    assert result.exit_code == 0, result.stdout
    return result


class TestStepwiseWorkflow:
    """Test running the experiment one subcommand at a time."""

    def test_full_workflow(self, runner, config_file, temp_dir):
        run_dir = temp_dir / "steps"

        invoke(runner, config_file, run_dir, "gen-data")
        assert (run_dir / "train_poisoned.mmds").exists()
        assert (run_dir / "test_triggered.mmds").exists()

        result = invoke(runner, config_file, run_dir, "train", "--epochs", "1")
        assert "Checkpoint saved to" in result.stdout
        history = pd.read_csv(run_dir / "history.csv")
        assert len(history) == 1

        invoke(runner, config_file, run_dir, "adaptive-attack", "--beta", "0.5")
        assert len(pd.read_csv(run_dir / "adaptive.csv")) == 1

        invoke(runner, config_file, run_dir, "mitigate", "--set", "mmac.t_max=2")
        assert (run_dir / "bounds.zbnd").exists()
        assert len(pd.read_csv(run_dir / "trajectory.csv")) == 2

        invoke(runner, config_file, run_dir, "detect", "--mode", "reject")
        detections = pd.read_csv(run_dir / "detections.csv", keep_default_na=False)
        triggered_count = len(detections)
        assert triggered_count > 0
        flagged = detections[detections["verdict"] == "trigger"]
        assert set(flagged["decided_class"]) <= {"n/a"}
        null = json.loads((run_dir / "null.json").read_text())
        assert null["sample_count"] == 45

        result = invoke(runner, config_file, run_dir, "evaluate")
        report = pd.read_csv(run_dir / "report.csv", keep_default_na=False)
        rules = list(zip(report["defense"], report["mode"], strict=True))
        assert rules == [("none", ""), ("mmac", ""), ("mmdf", "correct"), ("mmdf", "reject")]
        assert "Report saved to" in result.stdout

        invoke(
            runner, config_file, run_dir, "evaluate", "--defense", "mmdf",
            "--set", 'detection.mode="reject"',
        )
        report = pd.read_csv(run_dir / "report.csv", keep_default_na=False)
        assert list(report["mode"]) == ["reject", "correct"]
        assert set(report["defense"]) == {"mmdf"}

        invoke(runner, config_file, run_dir, "roc", "--plot")
        assert (run_dir / "roc.csv").exists()
        svg = (run_dir / "roc.svg").read_text()
        assert svg.lstrip().startswith("<?xml")

        invoke(runner, config_file, run_dir, "profile")
        profile = pd.read_csv(run_dir / "profile.csv")
        assert set(profile["split"]) == {"clean", "triggered"}

    def test_evaluate_without_bounds_fails(self, runner, config_file, temp_dir):
        run_dir = temp_dir / "nobounds"
        invoke(runner, config_file, run_dir, "gen-data")
        invoke(runner, config_file, run_dir, "train", "--epochs", "1")
        result = runner.invoke(
            app,
            [
                "evaluate",
                "--defense",
                "mmac",
                "--config",
                str(config_file),
                "--run-dir",
                str(run_dir),
            ],
        )
        assert result.exit_code == EXIT_STAGE_FAILURE
        assert "❌ Error:" in result.stdout

    def test_gen_data_without_attack_skips_poisoned_files(self, runner, config_file, temp_dir):
        run_dir = temp_dir / "clean"
        invoke(runner, config_file, run_dir, "gen-data")
        invoke(runner, config_file, run_dir, "gen-data", "--attack", "none")
        assert (run_dir / "train_clean.mmds").exists()
        assert not (run_dir / "train_poisoned.mmds").exists()
        assert not (run_dir / "test_triggered.mmds").exists()

    def test_adaptive_attack_needs_an_attack(self, runner, config_file, temp_dir):
        run_dir = temp_dir / "adaptive"
        result = runner.invoke(
            app,
            [
                "adaptive-attack",
                "--set",
                'attack.mode="none"',
                "--config",
                str(config_file),
                "--run-dir",
                str(run_dir),
            ],
        )
        assert result.exit_code == 2


class TestPipelineCommand:
    """Test the one-shot pipeline subcommand."""

    def test_pipeline_then_rerun(self, runner, config_file, temp_dir):
        first = temp_dir / "first"
        result = runner.invoke(
            app, ["pipeline", "--config", str(config_file), "-o", str(first)]
        )
        assert result.exit_code == 0, result.stdout
        assert "Summary" in result.stdout

        second = temp_dir / "second"
        result = runner.invoke(
            app, ["pipeline", "--manifest", str(first / "manifest.json"), "-o", str(second)]
        )
        assert result.exit_code == 0, result.stdout
        assert (first / "report.csv").read_bytes() == (second / "report.csv").read_bytes()
        assert (first / "summary.csv").read_bytes() == (second / "summary.csv").read_bytes()

    def test_deleted_bounds_fail_evaluation(self, runner, config_file, temp_dir):
        out = temp_dir / "run"
        runner.invoke(app, ["pipeline", "--config", str(config_file), "-o", str(out)])
        (out / "rep_00" / "bounds.zbnd").unlink()
        result = runner.invoke(
            app,
            [
                "evaluate",
                "--defense",
                "mmac",
                "--config",
                str(config_file),
                "--run-dir",
                str(out / "rep_00"),
            ],
        )
        assert result.exit_code == EXIT_STAGE_FAILURE
