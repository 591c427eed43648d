"""
Experiment orchestration and ACC/ASR/PACC metrics.
"""

from .metrics import (
    METRICS,
    EvalReport,
    MetricSummary,
    aggregate,
    confusion_matrix,
    evaluate,
)
from .pipeline import (
    STAGES,
    ExperimentData,
    RepetitionResult,
    RepetitionSeeds,
    adaptive_config,
    build_victim,
    finalize_victim,
    generate_data,
    load_manifest_config,
    mmac_config,
    poison_data,
    read_null,
    run_pipeline,
    run_repetition,
    split_clean,
    stage,
    write_manifest,
    write_null,
)

__all__ = [
    "EvalReport",
    "ExperimentData",
    "METRICS",
    "MetricSummary",
    "RepetitionResult",
    "RepetitionSeeds",
    "STAGES",
    "adaptive_config",
    "aggregate",
    "build_victim",
    "confusion_matrix",
    "evaluate",
    "finalize_victim",
    "generate_data",
    "load_manifest_config",
    "mmac_config",
    "poison_data",
    "read_null",
    "run_pipeline",
    "run_repetition",
    "split_clean",
    "stage",
    "write_manifest",
    "write_null",
]
