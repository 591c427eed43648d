import json

import numpy as np
import pandas as pd
import pytest

from marginclip.commands import pipeline_command
from marginclip.config import ExperimentConfig
from marginclip.errors import ArtifactFormatError, StageError
from marginclip.harness import finalize_victim, load_manifest_config, run_pipeline
from marginclip.nn import predict

REPETITION_FILES = [
    "train_clean.mmds",
    "train_poisoned.mmds",
    "clean_set.mmds",
    "test.mmds",
    "test_triggered.mmds",
    "model.mmck",
    "bounds.zbnd",
    "null.json",
    "history.csv",
    "trajectory.csv",
    "roc.csv",
    "report.csv",
]


def read_csv(path):
    return pd.read_csv(path, dtype=str, keep_default_na=False)


class TestRunPipeline:
    """Test the end-to-end experiment pipeline."""

    def test_writes_every_artifact(self, small_config):
        out = run_pipeline(small_config)
        for name in REPETITION_FILES:
            assert (out / "rep_00" / name).exists(), name
        for name in ("report.csv", "summary.csv", "manifest.json"):
            assert (out / name).exists(), name

    def test_report_rows_per_decision_rule(self, small_config):
        out = run_pipeline(small_config)
        report = read_csv(out / "report.csv")
        rules = list(zip(report["defense"], report["mode"]))
        assert rules == [("none", ""), ("mmac", ""), ("mmdf", "correct"), ("mmdf", "reject")]
        assert set(report["config_hash"]) == {small_config.config_hash()}
        for row in report.itertuples(index=False):
            parts = [float(getattr(row, c)) for c in ("asr", "pacc", "other", "rejected")]
            assert sum(parts) == pytest.approx(1.0)

    def test_correct_mode_never_rejects(self, small_config):
        out = run_pipeline(small_config)
        report = read_csv(out / "report.csv")
        correct = report[report["mode"] == "correct"].iloc[0]
        assert float(correct["rejected"]) == 0.0
        assert float(correct["clean_rejected"]) == 0.0

    def test_no_attack_reports_na(self, small_config):
        cfg = small_config.merge_with_cli({"attack.mode": "none"})
        out = run_pipeline(cfg)
        report = read_csv(out / "report.csv")
        assert set(report["asr"]) == {"n/a"}
        assert set(report["pacc"]) == {"n/a"}
        assert not (out / "rep_00" / "test_triggered.mmds").exists()
        assert not (out / "rep_00" / "roc.csv").exists()

    def test_repetitions_aggregate_with_sample_std(self, small_config):
        cfg = small_config.merge_with_cli({"experiment.repetitions": 2})
        out = run_pipeline(cfg)
        assert (out / "rep_01" / "report.csv").exists()
        summary = read_csv(out / "summary.csv")
        acc = summary[(summary["defense"] == "none") & (summary["metric"] == "acc")].iloc[0]
        assert acc["n"] == "2"
        assert acc["seeds"] == "0 1"
        assert acc["single_run"] == "False"

    def test_stage_error_names_failed_stage(self, small_config):
        # five clean samples are too few to fit the detection null
        cfg = small_config.merge_with_cli({"data.clean_fraction": 0.03})
        with pytest.raises(StageError) as excinfo:
            run_pipeline(cfg)
        assert excinfo.value.stage in ("mitigate", "calibrate")
        assert (cfg.output_dir() / "rep_00" / "model.mmck").exists()


class TestFinalizeVictim:
    """Test post-training activation standardization."""

    def test_standardized_victim_predicts_the_same(self, small_config, conv_net, conv_dataset):
        model = finalize_victim(small_config, conv_net, conv_dataset)
        assert model is not conv_net
        np.testing.assert_array_equal(
            predict(model, conv_dataset.images), predict(conv_net, conv_dataset.images)
        )

    def test_standardization_can_be_disabled(self, small_config, conv_net, conv_dataset):
        cfg = small_config.merge_with_cli({"model.standardize": False})
        assert finalize_victim(cfg, conv_net, conv_dataset) is conv_net


class TestManifest:
    """Test reproducing a run from its manifest."""

    def test_manifest_records_config_and_seeds(self, small_config):
        out = run_pipeline(small_config)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config_hash"] == small_config.config_hash()
        assert manifest["repetitions"][0]["seeds"]["repetition"] == 0
        assert "rep_00/report.csv" in manifest["artifacts"]

    def test_rerun_reproduces_identical_csvs(self, small_config, temp_dir):
        first = run_pipeline(small_config)
        rerun, summaries = pipeline_command(
            None, temp_dir / "rerun", manifest=first / "manifest.json"
        )
        original = json.loads((first / "manifest.json").read_text())["artifacts"]
        reproduced = json.loads((rerun / "manifest.json").read_text())["artifacts"]
        assert original == reproduced
        for name in original:
            assert (first / name).read_bytes() == (rerun / name).read_bytes()
        assert summaries

    def test_tampered_manifest_is_rejected(self, small_config):
        out = run_pipeline(small_config)
        path = out / "manifest.json"
        manifest = json.loads(path.read_text())
        manifest["config"]["train"]["epochs"] = 99
        path.write_text(json.dumps(manifest))
        with pytest.raises(ArtifactFormatError):
            load_manifest_config(path)

    def test_manifest_config_round_trips(self, small_config):
        out = run_pipeline(small_config)
        cfg = load_manifest_config(out / "manifest.json")
        assert isinstance(cfg, ExperimentConfig)
        assert cfg.config_hash() == small_config.config_hash()
