from pathlib import Path
from unittest.mock import patch

from typer.testing import CliRunner

from marginclip import __version__
from marginclip.cli import EXIT_CONFIG_ERROR, EXIT_STAGE_FAILURE, app
from marginclip.errors import ArtifactMissingError, ConfigError, StageError
from marginclip.harness import EvalReport, MetricSummary
from marginclip.training import EpochRecord, TrainHistory


class TestCLI:
    """Test the CLI application."""

    def setup_method(self):
        """Set up test runner."""
        self.runner = CliRunner()

    def test_version_flag(self):
        """Test --version flag displays version and exits."""
        result = self.runner.invoke(app, ["--version"])
        assert result.exit_code == 0
        assert f"marginclip version {__version__}" in result.stdout

    def test_version_short_flag(self):
        """Test -v flag displays version and exits."""
        result = self.runner.invoke(app, ["-v"])
        assert result.exit_code == 0
        assert "marginclip version" in result.stdout

    def test_help_flag(self):
        """Test --help flag lists the subcommands."""
        result = self.runner.invoke(app, ["--help"])
        assert result.exit_code == 0
        assert "Usage:" in result.stdout
        for command in ("gen-data", "train", "mitigate", "detect", "evaluate", "pipeline"):
            assert command in result.stdout

    def test_help_short_flag(self):
        """Test -h flag displays help."""
        result = self.runner.invoke(app, ["-h"])
        assert result.exit_code == 0
        assert "Usage:" in result.stdout

    def test_malformed_override_exits_with_config_error(self, temp_dir):
        """Test that a --set without '=' is a configuration error."""
        result = self.runner.invoke(app, ["gen-data", "--set", "train.epochs", "--run-dir", str(temp_dir)])
        assert result.exit_code == EXIT_CONFIG_ERROR
        assert "❌ Error:" in result.stdout

    def test_invalid_value_exits_with_config_error(self, temp_dir):
        """Test that a value failing validation is a configuration error."""
        result = self.runner.invoke(
            app, ["gen-data", "--attack", "some2some", "--run-dir", str(temp_dir)]
        )
        assert result.exit_code == EXIT_CONFIG_ERROR
        assert "attack.mode" in result.stdout

    @patch("marginclip.cli.get_effective_config")
    def test_config_error_from_loader(self, mock_config, temp_dir):
        """Test that ConfigError raised while loading maps to exit code 2."""
        mock_config.side_effect = ConfigError("Invalid TOML syntax in marginclip.toml")
        result = self.runner.invoke(app, ["evaluate", "--run-dir", str(temp_dir)])
        assert result.exit_code == EXIT_CONFIG_ERROR
        assert "Invalid TOML syntax" in result.stdout

    def test_missing_artifact_exits_with_stage_failure(self, temp_dir):
        """Test that a missing bounds file is a stage failure."""
        result = self.runner.invoke(
            app, ["evaluate", "--defense", "mmac", "--run-dir", str(temp_dir)]
        )
        assert result.exit_code == EXIT_STAGE_FAILURE
        assert "❌ Error:" in result.stdout

    @patch("marginclip.cli.evaluate_command")
    def test_unknown_defense_is_config_error(self, mock_evaluate, temp_dir):
        """Test that the defense name is validated by the command."""
        mock_evaluate.side_effect = ConfigError("defense must be one of none, mmac, mmdf or all")
        result = self.runner.invoke(
            app, ["evaluate", "--defense", "magic", "--run-dir", str(temp_dir)]
        )
        assert result.exit_code == EXIT_CONFIG_ERROR

    @patch("marginclip.cli.train_command")
    def test_train_flags_override_config(self, mock_train, temp_dir):
        """Test that dedicated flags and --set reach the effective config."""
        mock_train.return_value = (
            TrainHistory(epochs=[EpochRecord(0, 1.25, 0.5, 0.4, 0.9)]),
            temp_dir / "model.mmck",
        )
        result = self.runner.invoke(
            app,
            [
                "train",
                "--run-dir",
                str(temp_dir),
                "--epochs",
                "4",
                "--set",
                "train.batch_size=8",
            ],
        )
        assert result.exit_code == 0
        cfg = mock_train.call_args.args[0]
        assert cfg.train.epochs == 4
        assert cfg.train.batch_size == 8
        assert mock_train.call_args.args[1] == temp_dir
        assert "Checkpoint saved to" in result.stdout

    @patch("marginclip.cli.train_command")
    def test_flag_beats_set_override(self, mock_train, temp_dir):
        """Test that a dedicated flag wins over --set for the same key."""
        mock_train.return_value = (TrainHistory(), temp_dir / "model.mmck")
        self.runner.invoke(
            app,
            ["train", "--run-dir", str(temp_dir), "--set", "train.epochs=9", "--epochs", "2"],
        )
        assert mock_train.call_args.args[0].train.epochs == 2

    @patch("marginclip.cli.train_command")
    def test_set_override_survives_absent_flag(self, mock_train, temp_dir):
        """Test that --set keeps its value when the dedicated flag is not given."""
        mock_train.return_value = (TrainHistory(), temp_dir / "model.mmck")
        result = self.runner.invoke(
            app, ["train", "--run-dir", str(temp_dir), "--set", "train.epochs=9"]
        )
        assert result.exit_code == 0
        assert mock_train.call_args.args[0].train.epochs == 9

    @patch("marginclip.cli.train_command")
    def test_wrong_type_for_optional_key_is_config_error(self, mock_train, temp_dir):
        """Test that a string top_k exits with the configuration error code."""
        result = self.runner.invoke(
            app, ["train", "--run-dir", str(temp_dir), "--set", 'mmac.top_k="abc"']
        )
        assert result.exit_code == EXIT_CONFIG_ERROR
        assert "mmac.top_k" in result.stdout
        mock_train.assert_not_called()

    @patch("marginclip.cli.train_command")
    def test_default_run_dir_uses_repetition(self, mock_train, temp_dir):

        """Test that the run directory defaults to <output>/<name>/rep_NN."""
        mock_train.return_value = (TrainHistory(), temp_dir / "model.mmck")
        self.runner.invoke(
            app,
            ["train", "--set", f'experiment.output_dir="{temp_dir}"', "--rep", "3"],
        )
        assert mock_train.call_args.args[1] == Path(temp_dir) / "rep_03"

    @patch("marginclip.cli.train_command")
    def test_stage_error_exits_with_stage_failure(self, mock_train, temp_dir):
        """Test that stage failures map to exit code 3."""
        mock_train.side_effect = StageError("train", ValueError("loss diverged"))
        result = self.runner.invoke(app, ["train", "--run-dir", str(temp_dir)])
        assert result.exit_code == EXIT_STAGE_FAILURE
        assert "stage 'train' failed" in result.stdout

    @patch("marginclip.cli.evaluate_command")
    def test_evaluate_prints_report_table(self, mock_evaluate, temp_dir):
        """Test that evaluate shows a table of the reports."""
        mock_evaluate.return_value = (
            [EvalReport("none", 0, acc=0.91, asr=0.97, pacc=0.02, other=0.01, rejected=0.0)],
            temp_dir / "report.csv",
        )
        result = self.runner.invoke(app, ["evaluate", "--run-dir", str(temp_dir)])
        assert result.exit_code == 0
        assert "91.00" in result.stdout
        assert "97.00" in result.stdout
        assert "Report saved to" in result.stdout

    @patch("marginclip.cli.pipeline_command")
    def test_pipeline_prints_summary(self, mock_pipeline, temp_dir):
        """Test that the pipeline command shows the aggregated summary."""
        mock_pipeline.return_value = (
            temp_dir,
            [MetricSummary("mmac", "", "acc", 0.9, 0.0, 1, [0], True)],
        )
        result = self.runner.invoke(app, ["pipeline", "-o", str(temp_dir)])
        assert result.exit_code == 0
        assert "(single run)" in result.stdout
        assert "Artifacts saved to" in result.stdout

    @patch("marginclip.cli.pipeline_command")
    def test_pipeline_manifest_skips_config(self, mock_pipeline, temp_dir):
        """Test that --manifest reruns without loading the config file."""
        mock_pipeline.return_value = (temp_dir, [])
        manifest = temp_dir / "manifest.json"
        result = self.runner.invoke(app, ["pipeline", "--manifest", str(manifest)])
        assert result.exit_code == 0
        assert mock_pipeline.call_args.args[0] is None
        assert mock_pipeline.call_args.args[2] == manifest

    @patch("marginclip.cli.pipeline_command")
    def test_pipeline_missing_manifest(self, mock_pipeline, temp_dir):
        """Test that a missing manifest is reported as a stage failure."""
        mock_pipeline.side_effect = ArtifactMissingError("manifest not found")
        result = self.runner.invoke(app, ["pipeline", "--manifest", str(temp_dir / "m.json")])
        assert result.exit_code == EXIT_STAGE_FAILURE
