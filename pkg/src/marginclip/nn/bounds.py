"""
Clip bounds Z for a network's activation layers and the gradient bundle
returned by reverse-mode differentiation.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import BoundsError
from .network import Network

MIN_BOUND_MAGNITUDE = 1e-6


@dataclass
class ClipBounds:
    """
    Per-activation-layer saturation levels.

    ``upper[l]`` has one scalar per dense unit or per conv channel of the
    l-th activation layer. ``lower`` is only used with LeakyReLU networks.
    """

    upper: list[np.ndarray]
    lower: list[np.ndarray] | None = None

    @property
    def two_sided(self) -> bool:
        return self.lower is not None

    @property
    def layer_count(self) -> int:
        return len(self.upper)

    @classmethod
    def unbounded(cls, net: Network, two_sided: bool | None = None) -> "ClipBounds":
        """All upper bounds +inf (and lower bounds -inf when two-sided)."""
        return cls.constant(net, np.inf, two_sided=two_sided)

    @classmethod
    def constant(
        cls, net: Network, value: float, two_sided: bool | None = None
    ) -> "ClipBounds":
        """
        Every upper bound set to ``value``; lower bounds to ``-value``.

        Args:
            net: Network the bounds apply to
            value: Upper bound value (positive or +inf)
            two_sided: Whether to add lower bounds; defaults to ``net.leaky``
        """
        if two_sided is None:
            two_sided = net.leaky
        dtype = net.dtype
        upper = [np.full(w, value, dtype=dtype) for w in net.bound_widths]
        lower = (
            [np.full(w, -value, dtype=dtype) for w in net.bound_widths]
            if two_sided
            else None
        )
        bounds = cls(upper, lower)
        bounds.validate_for(net)
        return bounds

    @classmethod
    def zeros_like(cls, other: "ClipBounds") -> "ClipBounds":
        return cls(
            [np.zeros_like(u) for u in other.upper],
            [np.zeros_like(lo) for lo in other.lower] if other.lower is not None else None,
        )

    def validate_for(self, net: Network) -> None:
        """Raise BoundsError unless these bounds conform to ``net``."""
        widths = net.bound_widths
        if len(self.upper) != len(widths):
            raise BoundsError(
                f"bounds cover {len(self.upper)} activation layers, network has {len(widths)}"
            )
        for i, (u, width) in enumerate(zip(self.upper, widths, strict=True)):
            if u.shape != (width,):
                raise BoundsError(f"upper bound {i} has shape {u.shape}, expected ({width},)")
            if np.any(np.isnan(u)) or np.any(u <= 0):
                raise BoundsError(f"upper bound {i} must be strictly positive or +inf")
        if self.lower is None:
            return
        if not net.leaky:
            raise BoundsError("lower bounds are only defined for leaky_relu networks")
        if len(self.lower) != len(widths):
            raise BoundsError("lower bounds do not cover every activation layer")
        for i, (lo, u) in enumerate(zip(self.lower, self.upper, strict=True)):
            if lo.shape != u.shape:
                raise BoundsError(f"lower bound {i} has shape {lo.shape}, expected {u.shape}")
            if np.any(np.isnan(lo)) or np.any(lo >= u):
                raise BoundsError(f"lower bound {i} must lie strictly below the upper bound")

    def copy(self) -> "ClipBounds":
        return ClipBounds(
            [u.copy() for u in self.upper],
            [lo.copy() for lo in self.lower] if self.lower is not None else None,
        )

    def astype(self, dtype: np.dtype | type) -> "ClipBounds":
        return ClipBounds(
            [u.astype(dtype) for u in self.upper],
            [lo.astype(dtype) for lo in self.lower] if self.lower is not None else None,
        )

    def step(self, grad: "ClipBounds", learning_rate: float) -> "ClipBounds":
        """
        One gradient-descent step, projected back onto valid bounds.

        Upper bounds stay >= MIN_BOUND_MAGNITUDE and lower bounds stay
        <= -MIN_BOUND_MAGNITUDE so the pair never crosses.
        """
        upper = [
            np.maximum(u - learning_rate * g, MIN_BOUND_MAGNITUDE).astype(u.dtype)
            for u, g in zip(self.upper, grad.upper, strict=True)
        ]
        lower = None
        if self.lower is not None:
            assert grad.lower is not None
            lower = [
                np.minimum(lo - learning_rate * g, -MIN_BOUND_MAGNITUDE).astype(lo.dtype)
                for lo, g in zip(self.lower, grad.lower, strict=True)
            ]
        return ClipBounds(upper, lower)

    def scaled_add(self, other: "ClipBounds", scale: float) -> "ClipBounds":
        """Return ``self + scale * other`` (used to combine gradients)."""
        upper = [a + scale * b for a, b in zip(self.upper, other.upper, strict=True)]
        lower = None
        if self.lower is not None and other.lower is not None:
            lower = [a + scale * b for a, b in zip(self.lower, other.lower, strict=True)]
        return ClipBounds(upper, lower)

    def is_finite(self) -> bool:
        arrays = self.upper + (self.lower or [])
        return all(np.all(np.isfinite(a)) for a in arrays)


@dataclass
class GradientBundle:
    """Gradients of a scalar with respect to parameters, input and bounds."""

    d_params: list[dict[str, np.ndarray]]
    d_input: np.ndarray
    d_bounds: ClipBounds
