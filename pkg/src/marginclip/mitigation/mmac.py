"""
Learning activation clip bounds by maximum-margin suppression.

The objective combines a logit-matching MSE on correctly classified clean
samples with the lambda-weighted mean margin of per-class margin maxima. Bounds
follow plain gradient descent while lambda is scaled up or down depending on
whether the bounded network keeps its clean accuracy above ``pi``. By
default Z* is the last iterate that kept it.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from ..data import Dataset
from ..errors import ConfigError, EmptyDatasetError, NonFiniteError
from ..nn import (
    MIN_BOUND_MAGNITUDE,
    ClipBounds,
    Network,
    logits_batched,
    margin,
    margin_gradient,
    max_abs_activation_profile,
    predict,
    value_and_grad,
)
from .margin_ascent import MarginMaximaSet, generate_maxima

logger = logging.getLogger(__name__)

ACCURACY_SLACK = 0.02
SELECTIONS = ("last_feasible", "final")


@dataclass
class MmacConfig:
    """Hyperparameters of the bound-learning loop."""

    lambda0: float = 0.1
    alpha: float = 1.2
    pi: float = 0.95
    delta: float = 0.05
    t_max: int = 300
    refresh_period: int = 10
    maxima_per_class: int = 8
    ascent_steps: int = 30
    ascent_lr: float = 0.1
    z_init: float = 1.0
    init_from_profile: bool = False
    two_sided: bool | None = None
    top_k: int | None = None
    # "last_feasible" returns the last iterate meeting pi, "final" the last iterate
    selection: str = "last_feasible"
    batch_size: int = 256
    seed: int = 0

    def validate(self) -> None:
        if self.alpha <= 1.0:
            raise ConfigError("alpha must be greater than 1")
        if not 0.0 < self.pi <= 1.0:
            raise ConfigError("pi must lie in (0, 1]")
        if self.lambda0 <= 0:
            raise ConfigError("lambda0 must be positive")
        if self.delta <= 0:
            raise ConfigError("delta must be positive")
        if self.t_max < 0:
            raise ConfigError("t_max must be non-negative")
        if self.refresh_period < 1 or (self.t_max and self.refresh_period > self.t_max):
            raise ConfigError("refresh_period must lie in [1, t_max]")
        if self.maxima_per_class < 1:
            raise ConfigError("maxima_per_class must be at least 1")
        if self.top_k is not None and not 1 <= self.top_k <= self.maxima_per_class:
            raise ConfigError("top_k must lie in [1, maxima_per_class]")
        if self.z_init <= 0:
            raise ConfigError("z_init must be positive")
        if self.ascent_steps < 0 or self.ascent_lr <= 0:
            raise ConfigError("ascent_steps must be >= 0 and ascent_lr > 0")
        if self.selection not in SELECTIONS:
            raise ConfigError(f"selection must be one of {', '.join(SELECTIONS)}")


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    term1: float
    term2: float
    lambda_: float
    clean_acc: float


@dataclass
class MmacResult:
    """Learned bounds Z* with the per-iteration trajectory."""

    z_star: ClipBounds
    records: list[IterationRecord]
    maxima: MarginMaximaSet | None
    final_clean_acc: float
    accuracy_constraint_met: bool
    subset_size: int = 0
    # Iteration whose bounds became Z*, None for the initialization
    selected_iteration: int | None = None
    initial_bounds: ClipBounds | None = field(default=None, repr=False)

    @property
    def lambda_trajectory(self) -> list[float]:
        return [r.lambda_ for r in self.records]

    @property
    def accuracy_trajectory(self) -> list[float]:
        return [r.clean_acc for r in self.records]

    @property
    def objective_trajectory(self) -> list[float]:
        return [r.objective for r in self.records]


@dataclass
class ObjectiveValue:
    value: float
    term1: float
    term2: float
    d_bounds: ClipBounds


def correctly_classified_subset(net: Network, clean: Dataset) -> Dataset:
    """
    Clean samples the unbounded network classifies correctly.

    Raises:
        EmptyDatasetError: when no sample is classified correctly
    """
    if len(clean) == 0:
        raise EmptyDatasetError("clean set is empty")
    correct = np.flatnonzero(predict(net, clean.images) == clean.labels)
    if len(correct) == 0:
        raise EmptyDatasetError(
            "the network misclassifies every clean sample; the clean set is unusable"
        )
    return clean.subset(correct)


def bounded_accuracy(net: Network, z: ClipBounds | None, dataset: Dataset) -> float:
    return float((predict(net, dataset.images, z) == dataset.labels).mean())


def update_lambda(lam: float, clean_acc: float, pi: float, alpha: float) -> float:
    """Scale lambda up by ``alpha`` while accuracy holds (``>= pi``), down otherwise."""
    if alpha <= 1.0:
        raise ConfigError("alpha must be greater than 1")
    return lam * alpha if clean_acc >= pi else lam / alpha


def _accumulate(total: ClipBounds | None, grad: ClipBounds) -> ClipBounds:
    return grad if total is None else total.scaled_add(grad, 1.0)


def mmac_objective(
    net: Network,
    z: ClipBounds,
    d_s: Dataset,
    maxima: MarginMaximaSet,
    lam: float,
    reference_logits: np.ndarray | None = None,
    top_k: int | None = None,
    batch_size: int = 256,
) -> ObjectiveValue:
    """
    Objective value and its gradient with respect to the bounds.

    term1 = mean over samples and classes of ``(f_bar_c(x; Z) - f_c(x))^2`` on
    ``d_s``; term2 = mean margin of the maxima (the ``top_k`` best per class
    when set). Maxima are constants here.

    Args:
        net: Network
        z: Current bounds
        d_s: Correctly classified clean samples
        maxima: Margin maxima for every class
        lam: Weight of term2
        reference_logits: Cached unbounded logits of ``d_s``
        top_k: Keep only the top_k maxima per class (None = all)
        batch_size: Evaluation chunk size

    Returns:
        ObjectiveValue with ``term1 + lam * term2`` and d/dZ
    """
    if maxima.class_count != net.class_count or any(len(p) == 0 for p in maxima.points):
        raise ValueError("margin maxima are required for every class")
    if len(d_s) == 0:
        raise EmptyDatasetError("logit-matching set is empty")
    if reference_logits is None:
        reference_logits = logits_batched(net, d_s.images)
    scale1 = 1.0 / (len(d_s) * net.class_count)

    term1 = 0.0
    grad1: ClipBounds | None = None
    for start in range(0, len(d_s), batch_size):
        target = reference_logits[start : start + batch_size]

        def mse(logits, _acts, target=target):
            diff = logits - target
            return float((diff.astype(np.float64) ** 2).sum() * scale1), 2 * scale1 * diff, None

        value, _, grads = value_and_grad(net, z, d_s.images[start : start + batch_size], mse)
        term1 += value
        grad1 = _accumulate(grad1, grads.d_bounds)

    selected: list[tuple[int, np.ndarray]] = []
    for c, points in enumerate(maxima.points):
        if top_k is not None and top_k < len(points):
            current = margin(logits_batched(net, points, z), c)
            points = points[np.argsort(-current, kind="stable")[:top_k]]
        selected.append((c, points))
    scale2 = 1.0 / sum(len(p) for _, p in selected)

    term2 = 0.0
    grad2: ClipBounds | None = None
    for c, points in selected:

        def mean_margin(logits, _acts, c=c):
            return (
                float(margin(logits, c).astype(np.float64).sum() * scale2),
                scale2 * margin_gradient(logits, c),
                None,
            )

        value, _, grads = value_and_grad(net, z, points, mean_margin)
        term2 += value
        grad2 = _accumulate(grad2, grads.d_bounds)

    assert grad1 is not None and grad2 is not None
    return ObjectiveValue(
        value=term1 + lam * term2,
        term1=term1,
        term2=term2,
        d_bounds=grad1.scaled_add(grad2, lam),
    )


def initial_bounds(net: Network, clean: Dataset, cfg: MmacConfig) -> ClipBounds:
    """Constant ``z_init`` bounds, or the clean activation extremes when profiling."""
    two_sided = net.leaky if cfg.two_sided is None else cfg.two_sided
    if not cfg.init_from_profile:
        return ClipBounds.constant(net, cfg.z_init, two_sided=two_sided)
    profile = max_abs_activation_profile(net, clean.images)
    dtype = net.dtype
    upper = [np.maximum(m, MIN_BOUND_MAGNITUDE).astype(dtype) for m in profile.maxima]
    lower = (
        [np.minimum(m, -MIN_BOUND_MAGNITUDE).astype(dtype) for m in profile.minima]
        if two_sided
        else None
    )
    bounds = ClipBounds(upper, lower)
    bounds.validate_for(net)
    return bounds


def run_mmac(
    net: Network,
    clean: Dataset,
    cfg: MmacConfig,
    on_iteration: Callable[[IterationRecord], None] | None = None,
) -> MmacResult:
    """
    Learn clip bounds Z* for ``net`` from a small clean set.

    Network parameters are never modified.

    Args:
        net: Possibly backdoored network
        clean: Small clean dataset D
        cfg: Loop hyperparameters
        on_iteration: Optional callback receiving each IterationRecord

    Returns:
        MmacResult with Z*, trajectories and the final maxima

    Raises:
        EmptyDatasetError: when no clean sample is correctly classified
        NonFiniteError: when the objective stops being finite
    """
    cfg.validate()
    d_s = correctly_classified_subset(net, clean)
    reference = logits_batched(net, d_s.images)
    z = initial_bounds(net, clean, cfg)
    init = z.copy()
    lam = cfg.lambda0
    maxima: MarginMaximaSet | None = None
    records: list[IterationRecord] = []
    feasible: tuple[int, ClipBounds, float] | None = None

    logger.info(
        "learning bounds on %d correctly classified of %d clean samples",
        len(d_s),
        len(clean),
    )

    for iteration in range(cfg.t_max):
        if iteration % cfg.refresh_period == 0:
            maxima = generate_maxima(
                net,
                z,
                cfg.maxima_per_class,
                cfg.ascent_steps,
                cfg.ascent_lr,
                seed=cfg.seed * 1_000_003 + iteration,
            )
        assert maxima is not None
        objective = mmac_objective(
            net, z, d_s, maxima, lam, reference, cfg.top_k, cfg.batch_size
        )
        if not np.isfinite(objective.value) or not objective.d_bounds.is_finite():
            raise NonFiniteError(f"objective became non-finite at iteration {iteration}")
        z = z.step(objective.d_bounds, cfg.delta)
        acc = bounded_accuracy(net, z, clean)
        record = IterationRecord(
            iteration=iteration,
            objective=objective.value,
            term1=objective.term1,
            term2=objective.term2,
            lambda_=lam,
            clean_acc=acc,
        )
        records.append(record)
        if on_iteration is not None:
            on_iteration(record)
        if acc >= cfg.pi:
            feasible = (iteration, z, acc)
        lam = update_lambda(lam, acc, cfg.pi, cfg.alpha)

    selected = records[-1].iteration if records else None
    final_acc = records[-1].clean_acc if records else bounded_accuracy(net, z, clean)
    if cfg.selection == "last_feasible" and feasible is not None:
        selected, z, final_acc = feasible
        logger.debug("selected the bounds of iteration %d (accuracy %.4f)", selected, final_acc)
    met = final_acc >= cfg.pi - ACCURACY_SLACK
    if not met:
        logger.warning(
            "accuracy constraint unmet: bounded clean accuracy %.4f < %.4f",
            final_acc,
            cfg.pi - ACCURACY_SLACK,
        )
    return MmacResult(
        z_star=z,
        records=records,
        maxima=maxima,
        final_clean_acc=final_acc,
        accuracy_constraint_met=met,
        subset_size=len(d_s),
        selected_iteration=selected,
        initial_bounds=init,
    )
