"""
CSV report writing.

Column order for every table is frozen here; every file carries the config
hash so results stay traceable to the configuration that produced them.
"""

from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd

from ..detection import DetectionBatch, RocCurve
from ..mitigation import IterationRecord
from ..training import AdaptiveHistory, EpochRecord

if TYPE_CHECKING:
    from ..harness.metrics import EvalReport, MetricSummary

HISTORY_COLUMNS = ["epoch", "loss", "train_acc", "test_acc", "asr", "config_hash"]
TRAJECTORY_COLUMNS = [
    "iteration",
    "objective",
    "term1",
    "term2",
    "lambda",
    "clean_acc",
    "config_hash",
]
REPORT_COLUMNS = [
    "defense",
    "mode",
    "seed",
    "acc",
    "asr",
    "pacc",
    "other",
    "rejected",
    "clean_rejected",
    "auc",
    "config_hash",
]
SUMMARY_COLUMNS = [
    "defense",
    "mode",
    "metric",
    "mean",
    "std",
    "n",
    "seeds",
    "single_run",
    "config_hash",
]
DETECTION_COLUMNS = [
    "index",
    "statistic",
    "p_value",
    "verdict",
    "original_class",
    "decided_class",
    "config_hash",
]
ROC_COLUMNS = ["threshold", "fpr", "tpr", "config_hash"]
ADAPTIVE_COLUMNS = ["round", "mean_loss", "mean_penalty", "config_hash"]
PROFILE_COLUMNS = ["split", "layer", "unit", "min", "max", "config_hash"]

NA = "n/a"


def _write(frame: pd.DataFrame, columns: list[str], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = frame.reindex(columns=columns)
    frame.to_csv(path, index=False, na_rep=NA, lineterminator="\n")
    return path


def write_history(path: Path, epochs: list[EpochRecord], config_hash: str) -> Path:
    rows = [
        {
            "epoch": r.epoch,
            "loss": r.loss,
            "train_acc": r.train_acc,
            "test_acc": r.test_acc,
            "asr": r.asr,
            "config_hash": config_hash,
        }
        for r in epochs
    ]
    return _write(pd.DataFrame(rows), HISTORY_COLUMNS, path)


def write_trajectory(path: Path, records: list[IterationRecord], config_hash: str) -> Path:
    rows = [
        {
            "iteration": r.iteration,
            "objective": r.objective,
            "term1": r.term1,
            "term2": r.term2,
            "lambda": r.lambda_,
            "clean_acc": r.clean_acc,
            "config_hash": config_hash,
        }
        for r in records
    ]
    return _write(pd.DataFrame(rows), TRAJECTORY_COLUMNS, path)


def write_adaptive_history(path: Path, history: AdaptiveHistory, config_hash: str) -> Path:
    rows = [
        {
            "round": r.round,
            "mean_loss": r.mean_loss,
            "mean_penalty": r.mean_penalty,
            "config_hash": config_hash,
        }
        for r in history.rounds
    ]
    return _write(pd.DataFrame(rows), ADAPTIVE_COLUMNS, path)


def reports_frame(reports: "list[EvalReport]", config_hash: str) -> pd.DataFrame:
    rows = [
        {
            "defense": r.defense,
            "mode": r.mode,
            "seed": r.seed,
            "acc": r.acc,
            "asr": r.asr,
            "pacc": r.pacc,
            "other": r.other,
            "rejected": r.rejected,
            "clean_rejected": r.clean_rejected,
            "auc": r.auc,
            "config_hash": config_hash,
        }
        for r in reports
    ]
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def write_reports(path: Path, reports: "list[EvalReport]", config_hash: str) -> Path:
    return _write(reports_frame(reports, config_hash), REPORT_COLUMNS, path)


def write_summary(path: Path, summaries: "list[MetricSummary]", config_hash: str) -> Path:
    rows = [
        {
            "defense": s.defense,
            "mode": s.mode,
            "metric": s.metric,
            "mean": s.mean,
            "std": s.std,
            "n": s.n,
            "seeds": " ".join(str(seed) for seed in s.seeds),
            "single_run": s.single_run,
            "config_hash": config_hash,
        }
        for s in summaries
    ]
    return _write(pd.DataFrame(rows), SUMMARY_COLUMNS, path)


def write_detections(path: Path, batch: DetectionBatch, config_hash: str) -> Path:
    decided = pd.array(batch.decided, dtype="Int64")
    decided[batch.decided < 0] = pd.NA
    frame = pd.DataFrame(
        {
            "index": np.arange(len(batch)),
            "statistic": batch.statistics,
            "p_value": batch.p_values,
            "verdict": np.where(batch.flagged, "trigger", "benign"),
            "original_class": batch.original,
            "decided_class": decided,
            "config_hash": config_hash,
        }
    )
    return _write(frame, DETECTION_COLUMNS, path)


def write_roc(path: Path, curve: RocCurve, config_hash: str) -> Path:
    frame = pd.DataFrame(
        {
            "threshold": curve.thresholds,
            "fpr": curve.fpr,
            "tpr": curve.tpr,
            "config_hash": config_hash,
        }
    )
    return _write(frame, ROC_COLUMNS, path)


def write_profile(
    path: Path,
    profiles: dict[str, tuple[list[np.ndarray], list[np.ndarray]]],
    config_hash: str,
) -> Path:
    """Per split, layer and unit: minimum and maximum activation."""
    rows = []
    for split, (minima, maxima) in profiles.items():
        for layer, (low, high) in enumerate(zip(minima, maxima, strict=True)):
            for unit in range(len(high)):
                rows.append(
                    {
                        "split": split,
                        "layer": layer,
                        "unit": unit,
                        "min": float(low[unit]),
                        "max": float(high[unit]),
                        "config_hash": config_hash,
                    }
                )
    return _write(pd.DataFrame(rows), PROFILE_COLUMNS, path)
