"""
Detection ROC by sweeping the threshold on the statistic.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import mannwhitneyu

from ..errors import EmptyDatasetError


@dataclass
class RocCurve:
    """
    Points ordered by decreasing threshold, from (0, 0) to (1, 1).

    A sample is flagged when its statistic is ``>= threshold``.
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    auc_trapezoid: float


def roc_curve(clean_stats: np.ndarray, trigger_stats: np.ndarray) -> RocCurve:
    """
    ROC of "trigger" versus "clean" for every distinct statistic value.

    The AUC comes from the Mann-Whitney U of triggered against clean
    statistics (ties count one half); ``auc_trapezoid`` integrates the swept
    curve independently.

    Args:
        clean_stats: Statistics of clean samples
        trigger_stats: Statistics of triggered samples

    Returns:
        RocCurve
    """
    clean = np.asarray(clean_stats, dtype=np.float64)
    trigger = np.asarray(trigger_stats, dtype=np.float64)
    if len(clean) == 0 or len(trigger) == 0:
        raise EmptyDatasetError("ROC needs both clean and triggered statistics")

    thresholds = np.concatenate([[np.inf], np.unique(np.concatenate([clean, trigger]))[::-1]])
    clean_sorted = np.sort(clean)
    trigger_sorted = np.sort(trigger)
    fpr = (len(clean) - np.searchsorted(clean_sorted, thresholds, side="left")) / len(clean)
    tpr = (len(trigger) - np.searchsorted(trigger_sorted, thresholds, side="left")) / len(
        trigger
    )

    u = mannwhitneyu(trigger, clean, alternative="two-sided").statistic
    return RocCurve(
        thresholds=thresholds,
        fpr=fpr,
        tpr=tpr,
        auc=float(u / (len(clean) * len(trigger))),
        auc_trapezoid=float(np.trapezoid(tpr, fpr)),
    )
