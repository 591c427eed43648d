"""
Input-space margin maximization by projected gradient ascent.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError
from ..nn import ClipBounds, Network, margin, margin_gradient, value_and_grad


@dataclass
class MarginAscentResult:
    """Ascent end points sorted by margin (descending) plus per-step margins."""

    points: np.ndarray
    margins: np.ndarray
    trajectory: np.ndarray


@dataclass
class MarginMaximaSet:
    """J_c margin maxima per class, with margins recorded under the bounds used."""

    points: list[np.ndarray]
    margins: list[np.ndarray]
    recorded_with: ClipBounds | None = field(default=None, repr=False)

    @property
    def class_count(self) -> int:
        return len(self.points)

    @property
    def total_count(self) -> int:
        return sum(len(p) for p in self.points)

    def best_margins(self) -> np.ndarray:
        return np.array([m.max() if len(m) else -np.inf for m in self.margins])


def margins_and_input_gradient(
    net: Network, z: ClipBounds | None, x: np.ndarray, c: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-point margins for class ``c`` and their gradients w.r.t. the points."""
    captured: dict[str, np.ndarray] = {}

    def objective(logits, _acts):
        captured["margins"] = margin(logits, c)
        return float(captured["margins"].sum()), margin_gradient(logits, c), None

    _, _, grads = value_and_grad(net, z, x, objective)
    return captured["margins"], grads.d_input


def maximize_margin(
    net: Network,
    z: ClipBounds | None,
    c: int,
    count: int,
    steps: int,
    learning_rate: float,
    seed: int,
) -> MarginAscentResult:
    """
    Projected gradient ascent on ``margin_c`` from uniform random starts in [0, 1].

    A step is accepted only if it does not lower that point's margin, so each
    point's margin is non-decreasing. A rejected step halves that point's step
    size. Each point draws its start from its own ``(seed, c, j)`` stream.

    Args:
        net: Network
        z: Bounds defining the bounded network (None for unbounded)
        c: Class whose margin is maximized
        count: Number of points J_c
        steps: Ascent iterations
        learning_rate: Initial step size
        seed: Base seed

    Returns:
        MarginAscentResult with points in the feasible box
    """
    if not 0 <= c < net.class_count:
        raise ShapeError(f"class {c} out of range [0, {net.class_count})")
    if count < 1:
        raise ValueError("need at least one ascent point")
    starts = [np.random.default_rng([seed, c, j]).random(net.input_shape) for j in range(count)]
    points = np.stack(starts).astype(net.dtype)
    step_size = np.full(count, learning_rate, dtype=net.dtype)
    broadcast = (count,) + (1,) * len(net.input_shape)

    margins, grad = margins_and_input_gradient(net, z, points, c)
    trajectory = [margins.copy()]
    for _ in range(steps):
        candidate = np.clip(points + step_size.reshape(broadcast) * grad, 0.0, 1.0)
        cand_margins, cand_grad = margins_and_input_gradient(net, z, candidate, c)
        accept = cand_margins >= margins
        points[accept] = candidate[accept]
        margins[accept] = cand_margins[accept]
        grad[accept] = cand_grad[accept]
        step_size[~accept] *= 0.5
        trajectory.append(margins.copy())

    order = np.argsort(-margins, kind="stable")
    return MarginAscentResult(
        points=points[order],
        margins=margins[order],
        trajectory=np.stack(trajectory)[:, order],
    )


def generate_maxima(
    net: Network,
    z: ClipBounds | None,
    per_class: int,
    steps: int,
    learning_rate: float,
    seed: int,
) -> MarginMaximaSet:
    """Run ``maximize_margin`` for every class."""
    points, margins = [], []
    for c in range(net.class_count):
        result = maximize_margin(net, z, c, per_class, steps, learning_rate, seed)
        points.append(result.points)
        margins.append(result.margins)
    return MarginMaximaSet(points, margins, z.copy() if z is not None else None)
