"""
Console formatting of evaluation results.
"""

from rich.table import Table

from ..detection import RocCurve
from ..harness import EvalReport, MetricSummary
from ..mitigation import MmacResult
from ..training import TrainHistory

NA = "n/a"


def _percent(value: float | None) -> str:
    return NA if value is None else f"{100 * value:.2f}"


class ReportFormatter:
    """Builds rich tables for the results of each command."""

    def reports_table(self, reports: list[EvalReport], title: str = "Evaluation") -> Table:
        """One row per decision rule; rates in percent."""
        table = Table(title=title)
        for column in ("Defense", "Seed", "ACC", "ASR", "PACC", "Other", "Rejected", "AUC"):
            table.add_column(column, justify="left" if column == "Defense" else "right")
        for r in reports:
            table.add_row(
                self._defense_label(r.defense, r.mode),
                str(r.seed),
                _percent(r.acc),
                _percent(r.asr),
                _percent(r.pacc),
                _percent(r.other),
                _percent(r.rejected),
                NA if r.auc is None else f"{r.auc:.4f}",
            )
        return table

    def summary_table(self, summaries: list[MetricSummary], title: str = "Summary") -> Table:
        """Mean ± std per defense and metric; rates in percent, AUC as is."""
        table = Table(title=title)
        table.add_column("Defense")
        table.add_column("Metric")
        table.add_column("Mean ± std", justify="right")
        table.add_column("n", justify="right")
        for s in summaries:
            scale, digits = (1.0, 4) if s.metric == "auc" else (100.0, 2)
            if s.mean is None:
                value = NA
            else:
                value = f"{scale * s.mean:.{digits}f} ± {scale * (s.std or 0.0):.{digits}f}"
                if s.single_run:
                    value += " (single run)"
            table.add_row(self._defense_label(s.defense, s.mode), s.metric.upper(), value, str(s.n))
        return table

    def training_table(self, history: TrainHistory) -> Table:
        table = Table(title="Training")
        for column in ("Epoch", "Loss", "Train ACC", "Test ACC", "ASR"):
            table.add_column(column, justify="right")
        for r in history.epochs:
            table.add_row(
                str(r.epoch),
                f"{r.loss:.4f}",
                _percent(r.train_acc),
                _percent(r.test_acc),
                _percent(r.asr),
            )
        return table

    def mmac_table(self, result: MmacResult) -> Table:
        table = Table(title="Learned bounds")
        table.add_column("Layer", justify="right")
        table.add_column("Width", justify="right")
        table.add_column("Min upper", justify="right")
        table.add_column("Mean upper", justify="right")
        table.add_column("Max upper", justify="right")
        for i, upper in enumerate(result.z_star.upper):
            table.add_row(
                str(i),
                str(len(upper)),
                f"{upper.min():.4f}",
                f"{upper.mean():.4f}",
                f"{upper.max():.4f}",
            )
        table.caption = (
            f"clean ACC {_percent(result.final_clean_acc)}%"
            + (
                ""
                if result.selected_iteration is None
                else f" at iteration {result.selected_iteration}"
            )
            + ("" if result.accuracy_constraint_met else " (accuracy constraint unmet)")
        )
        return table

    def roc_caption(self, curve: RocCurve) -> str:
        return f"AUC {curve.auc:.4f} over {len(curve.thresholds) - 1} thresholds"

    def _defense_label(self, defense: str, mode: str) -> str:
        return f"{defense} ({mode})" if mode else defense
