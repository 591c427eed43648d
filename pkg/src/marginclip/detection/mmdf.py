"""
Test-time trigger detection from the margin change between the original and
the clipped network, with a Gaussian null fitted on clean samples.
"""

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.stats import norm

from ..data import Dataset
from ..errors import CalibrationError, ConfigError
from ..nn import ClipBounds, Network, logits_batched, margin

logger = logging.getLogger(__name__)

DEFAULT_THETA = 0.005
MIN_CALIBRATION_SAMPLES = 20
SIGMA_FLOOR = 1e-6
REJECTED = -1

CorrectionMode = Literal["correct", "reject"]
Verdict = Literal["benign", "trigger"]


@dataclass(frozen=True)
class NullModel:
    mu: float
    sigma: float
    sample_count: int


@dataclass(frozen=True)
class DetectionOutcome:
    """Decision for one input; ``decided_class`` is None when rejected."""

    statistic: float
    p_value: float
    verdict: Verdict
    original_class: int
    decided_class: int | None
    mode: CorrectionMode


@dataclass
class DetectionBatch:
    """Vectorized outcomes; ``decided`` holds REJECTED for rejected inputs."""

    statistics: np.ndarray
    p_values: np.ndarray
    flagged: np.ndarray
    original: np.ndarray
    decided: np.ndarray
    mode: CorrectionMode

    def __len__(self) -> int:
        return len(self.statistics)

    def outcome(self, i: int) -> DetectionOutcome:
        decided = int(self.decided[i])
        return DetectionOutcome(
            statistic=float(self.statistics[i]),
            p_value=float(self.p_values[i]),
            verdict="trigger" if self.flagged[i] else "benign",
            original_class=int(self.original[i]),
            decided_class=None if decided == REJECTED else decided,
            mode=self.mode,
        )


def _validate_mode(mode: str) -> None:
    if mode not in ("correct", "reject"):
        raise ConfigError(f"unknown correction mode '{mode}' (expected correct or reject)")


def _statistics_and_logits(
    net: Network, z_star: ClipBounds, x: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    z_star.validate_for(net)
    original = logits_batched(net, x)
    bounded = logits_batched(net, x, z_star)
    predicted = original.argmax(axis=1)
    stats = margin(original, predicted) - margin(bounded, predicted)
    return stats.astype(np.float64), predicted, bounded


def statistic(net: Network, z_star: ClipBounds, x: np.ndarray) -> np.ndarray:
    """
    Margin drop ``S`` for each input.

    ``c*`` is the unbounded prediction; ``S`` is the unbounded margin of ``c*``
    minus the bounded margin of ``c*``. ``S`` is 0 when clipping changes nothing.

    Args:
        net: Original network
        z_star: Learned bounds
        x: Input batch

    Returns:
        ``[N]`` float64 statistics
    """
    if len(x) == 0:
        return np.zeros(0)
    return _statistics_and_logits(net, z_star, x)[0]


def fit_null_from_statistics(stats: np.ndarray) -> NullModel:
    """Gaussian null from precomputed clean statistics (ddof=1 std, floored)."""
    stats = np.asarray(stats, dtype=np.float64)
    if len(stats) < MIN_CALIBRATION_SAMPLES:
        raise CalibrationError(
            f"need at least {MIN_CALIBRATION_SAMPLES} clean samples to fit the null, "
            f"got {len(stats)}"
        )
    mu = float(stats.mean())
    sigma = max(float(stats.std(ddof=1)), SIGMA_FLOOR)
    return NullModel(mu=mu, sigma=sigma, sample_count=len(stats))


def fit_null(net: Network, z_star: ClipBounds, clean: Dataset) -> NullModel:
    """
    Fit the null distribution of ``S`` on every clean calibration sample.

    Raises:
        CalibrationError: with fewer than 20 samples
    """
    if len(clean) < MIN_CALIBRATION_SAMPLES:
        raise CalibrationError(
            f"need at least {MIN_CALIBRATION_SAMPLES} clean samples to fit the null, "
            f"got {len(clean)}"
        )
    null = fit_null_from_statistics(statistic(net, z_star, clean.images))
    logger.info(
        "fitted null: mu=%.6f sigma=%.6f (n=%d)", null.mu, null.sigma, null.sample_count
    )
    return null


def p_value(null: NullModel, s: float | np.ndarray) -> float | np.ndarray:
    """One-sided upper-tail p-value ``1 - Phi((S - mu) / sigma)``."""
    p = norm.sf((np.asarray(s, dtype=np.float64) - null.mu) / null.sigma)
    return float(p) if np.ndim(p) == 0 else p


def corrected_classes(bounded_logits: np.ndarray, original: np.ndarray) -> np.ndarray:
    """Bounded argmax with the original prediction excluded (lowest index on ties)."""
    masked = bounded_logits.astype(np.float64, copy=True)
    masked[np.arange(len(masked)), original] = -np.inf
    return masked.argmax(axis=1)


def decide_batch(
    net: Network,
    z_star: ClipBounds,
    null: NullModel,
    x: np.ndarray,
    theta: float = DEFAULT_THETA,
    mode: CorrectionMode = "correct",
) -> DetectionBatch:
    """
    Detect and correct (or reject) a batch of inputs.

    Inputs with ``p >= theta`` keep the original prediction. Flagged inputs get
    no class under ``reject`` and the best bounded class other than ``c*``
    under ``correct``.
    """
    _validate_mode(mode)
    if not 0.0 < theta < 1.0:
        raise ConfigError("theta must lie in (0, 1)")
    stats, original, bounded = _statistics_and_logits(net, z_star, x)
    p = np.atleast_1d(p_value(null, stats))
    flagged = p < theta
    if mode == "reject":
        replacement = np.full_like(original, REJECTED)
    else:
        replacement = corrected_classes(bounded, original)
    decided = np.where(flagged, replacement, original)
    return DetectionBatch(
        statistics=stats,
        p_values=p,
        flagged=flagged,
        original=original,
        decided=decided,
        mode=mode,
    )


def decide(
    net: Network,
    z_star: ClipBounds,
    null: NullModel,
    x: np.ndarray,
    theta: float = DEFAULT_THETA,
    mode: CorrectionMode = "correct",
) -> DetectionOutcome:
    """Detection outcome for a single input shaped like ``net.input_shape``."""
    return decide_batch(net, z_star, null, np.asarray(x)[None], theta, mode).outcome(0)


@dataclass
class MmdfPipeline:
    """A fitted detector bundling the network, bounds, null and decision rule."""

    net: Network
    z_star: ClipBounds
    null: NullModel
    theta: float = DEFAULT_THETA
    mode: CorrectionMode = "correct"

    def decide_batch(self, x: np.ndarray) -> DetectionBatch:
        return decide_batch(self.net, self.z_star, self.null, x, self.theta, self.mode)

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Decided class per input, REJECTED where rejected."""
        return self.decide_batch(x).decided

    def with_mode(self, mode: CorrectionMode) -> "MmdfPipeline":
        _validate_mode(mode)
        return MmdfPipeline(self.net, self.z_star, self.null, self.theta, mode)
