"""
SVG rendering of detection ROC curves.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from ..detection import RocCurve  # noqa: E402


def plot_roc(path: Path, curve: RocCurve, title: str = "Detection ROC") -> Path:
    """
    Write the ROC curve as an SVG file.

    The SVG carries no date and a fixed hash salt so reruns produce identical
    bytes.
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context({"svg.hashsalt": "marginclip"}):
        fig, ax = plt.subplots(figsize=(4, 4))
        ax.plot(curve.fpr, curve.tpr, label=f"AUC = {curve.auc:.4f}")
        ax.plot([0, 1], [0, 1], linestyle="--", color="grey", linewidth=0.8)
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.01)
        ax.set_xlabel("False positive rate")
        ax.set_ylabel("True positive rate")
        ax.set_title(title)
        ax.legend(loc="lower right")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
