"""
Margin-change trigger detection, correction and ROC analysis.
"""

from .mmdf import (
    DEFAULT_THETA,
    MIN_CALIBRATION_SAMPLES,
    REJECTED,
    SIGMA_FLOOR,
    CorrectionMode,
    DetectionBatch,
    DetectionOutcome,
    MmdfPipeline,
    NullModel,
    corrected_classes,
    decide,
    decide_batch,
    fit_null,
    fit_null_from_statistics,
    p_value,
    statistic,
)
from .roc import RocCurve, roc_curve

__all__ = [
    "CorrectionMode",
    "DEFAULT_THETA",
    "DetectionBatch",
    "DetectionOutcome",
    "MIN_CALIBRATION_SAMPLES",
    "MmdfPipeline",
    "NullModel",
    "REJECTED",
    "RocCurve",
    "SIGMA_FLOOR",
    "corrected_classes",
    "decide",
    "decide_batch",
    "fit_null",
    "fit_null_from_statistics",
    "p_value",
    "roc_curve",
    "statistic",
]
