"""
End-to-end pipeline command implementation
"""

import logging
from collections.abc import Callable
from pathlib import Path

import pandas as pd

from ..config import ExperimentConfig
from ..config import settings as names
from ..errors import ArtifactMissingError
from ..harness import MetricSummary, load_manifest_config, run_pipeline
from ..output import NA

logger = logging.getLogger(__name__)


def _optional_float(value: str) -> float | None:
    return None if value == NA else float(value)


def load_summary(path: Path) -> list[MetricSummary]:
    """Read a summary CSV back into MetricSummary rows."""
    if not path.exists():
        raise ArtifactMissingError(f"summary not found: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    return [
        MetricSummary(
            defense=row.defense,
            mode=row.mode,
            metric=row.metric,
            mean=_optional_float(row.mean),
            std=_optional_float(row.std),
            n=int(row.n),
            seeds=[int(s) for s in row.seeds.split()],
            single_run=row.single_run == "True",
        )
        for row in frame.itertuples(index=False)
    ]


def pipeline_command(
    cfg: ExperimentConfig | None,
    out_dir: Path | None = None,
    manifest: Path | None = None,
    on_stage: Callable[[int, str], None] | None = None,
) -> tuple[Path, list[MetricSummary]]:
    """
    Run the whole experiment, or rerun the one recorded in ``manifest``.

    Args:
        cfg: Effective configuration; ignored when a manifest is given
        out_dir: Artifact directory override
        manifest: Manifest of an earlier run to reproduce
        on_stage: Optional callback receiving (repetition, stage name)

    Returns:
        (artifact directory, per-metric summaries)
    """
    if manifest is not None:
        cfg = load_manifest_config(manifest)
        logger.info("rerunning experiment recorded in %s", manifest)
    if cfg is None:
        raise ValueError("either a configuration or a manifest is required")
    directory = run_pipeline(cfg, out_dir, on_stage)
    return directory, load_summary(directory / names.SUMMARY_FILE)
