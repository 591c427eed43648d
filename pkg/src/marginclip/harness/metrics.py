"""
ACC / ASR / PACC evaluation and aggregation over repetitions.
"""

from dataclasses import dataclass, field

import numpy as np

from ..data import Dataset
from ..detection import REJECTED, MmdfPipeline
from ..errors import EmptyDatasetError
from ..nn import ClipBounds, Network, predict

METRICS = ("acc", "asr", "pacc", "other", "rejected", "clean_rejected", "auc")


@dataclass
class EvalReport:
    """
    Metrics of one decision rule on one repetition.

    ``asr``/``pacc``/``other``/``rejected`` partition the triggered test set and
    are None when there is no attack.
    """

    defense: str
    seed: int
    acc: float
    asr: float | None = None
    pacc: float | None = None
    other: float | None = None
    rejected: float | None = None
    clean_rejected: float = 0.0
    auc: float | None = None
    mode: str = ""
    confusion: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), np.int64), repr=False)

    def metric(self, name: str) -> float | None:
        return getattr(self, name)


@dataclass
class MetricSummary:
    defense: str
    mode: str
    metric: str
    mean: float | None
    std: float | None
    n: int
    seeds: list[int]
    single_run: bool


def _decisions(
    net: Network,
    images: np.ndarray,
    z_star: ClipBounds | None,
    pipeline: MmdfPipeline | None,
) -> np.ndarray:
    if pipeline is not None:
        return pipeline.predict(images)
    return predict(net, images, z_star)


def confusion_matrix(labels: np.ndarray, decided: np.ndarray, class_count: int) -> np.ndarray:
    """Counts ``[true, decided]``; the extra last column counts rejections."""
    matrix = np.zeros((class_count, class_count + 1), dtype=np.int64)
    columns = np.where(decided == REJECTED, class_count, decided)
    np.add.at(matrix, (labels, columns), 1)
    return matrix


def evaluate(
    net: Network,
    clean_test: Dataset,
    triggered_test: Dataset | None = None,
    z_star: ClipBounds | None = None,
    pipeline: MmdfPipeline | None = None,
    seed: int = 0,
    auc: float | None = None,
) -> EvalReport:
    """
    Evaluate one decision rule.

    The rule is the original network when neither ``z_star`` nor ``pipeline``
    is given, the bounded network with ``z_star``, and the full detect/correct
    pipeline with ``pipeline``. Rejected samples count as neither target nor
    source.

    Args:
        net: Original network
        clean_test: Clean test set
        triggered_test: Triggered test set (labels = source, intended = target)
        z_star: Bounds for the clipping defense
        pipeline: Fitted detector for the detection defense
        seed: Repetition seed recorded in the report
        auc: Detection AUC to record

    Returns:
        EvalReport
    """
    if len(clean_test) == 0:
        raise EmptyDatasetError("clean test set is empty")
    if pipeline is not None:
        defense, mode = "mmdf", pipeline.mode
    elif z_star is not None:
        defense, mode = "mmac", ""
    else:
        defense, mode = "none", ""

    decided = _decisions(net, clean_test.images, z_star, pipeline)
    report = EvalReport(
        defense=defense,
        seed=seed,
        acc=float((decided == clean_test.labels).mean()),
        clean_rejected=float((decided == REJECTED).mean()),
        auc=auc,
        mode=mode,
        confusion=confusion_matrix(clean_test.labels, decided, clean_test.class_count),
    )
    if triggered_test is None:
        return report
    if len(triggered_test) == 0 or triggered_test.intended is None:
        raise EmptyDatasetError("triggered test set is empty or carries no targets")

    decided = _decisions(net, triggered_test.images, z_star, pipeline)
    n = len(decided)
    to_target = int((decided == triggered_test.intended).sum())
    to_source = int((decided == triggered_test.labels).sum())
    rejected = int((decided == REJECTED).sum())
    report.asr = to_target / n
    report.pacc = to_source / n
    report.rejected = rejected / n
    report.other = (n - to_target - to_source - rejected) / n
    return report


def aggregate(reports: list[EvalReport]) -> list[MetricSummary]:
    """
    Mean and sample (n-1) standard deviation of every metric, per defense and mode.

    A single repetition yields std 0 with ``single_run`` set. Metrics that are
    n/a in every report (no attack) keep mean and std None.
    """
    groups: dict[tuple[str, str], list[EvalReport]] = {}
    for report in reports:
        groups.setdefault((report.defense, report.mode), []).append(report)

    summaries = []
    for (defense, mode), group in groups.items():
        seeds = [r.seed for r in group]
        for name in METRICS:
            values = [r.metric(name) for r in group if r.metric(name) is not None]
            if not values:
                summaries.append(
                    MetricSummary(defense, mode, name, None, None, 0, seeds, len(group) == 1)
                )
                continue
            array = np.asarray(values, dtype=np.float64)
            std = float(array.std(ddof=1)) if len(array) > 1 else 0.0
            summaries.append(
                MetricSummary(
                    defense,
                    mode,
                    name,
                    float(array.mean()),
                    std,
                    len(array),
                    seeds,
                    len(array) == 1,
                )
            )
    return summaries
