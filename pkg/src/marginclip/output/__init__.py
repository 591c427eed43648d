"""
CSV reports and ROC plots.
"""

from .csv_writer import (
    NA,
    REPORT_COLUMNS,
    SUMMARY_COLUMNS,
    reports_frame,
    write_adaptive_history,
    write_detections,
    write_history,
    write_profile,
    write_reports,
    write_roc,
    write_summary,
    write_trajectory,
)
from .roc_plot import plot_roc

__all__ = [
    "NA",
    "REPORT_COLUMNS",
    "SUMMARY_COLUMNS",
    "plot_roc",
    "reports_frame",
    "write_adaptive_history",
    "write_detections",
    "write_history",
    "write_profile",
    "write_reports",
    "write_roc",
    "write_summary",
    "write_trajectory",
]
