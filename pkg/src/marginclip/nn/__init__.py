"""
Minimal feedforward network engine with clip bounds and exact gradients.
"""

from .bounds import MIN_BOUND_MAGNITUDE, ClipBounds, GradientBundle
from .functional import (
    ActivationProfile,
    Objective,
    activations,
    backward,
    check_finite,
    forward,
    forward_bounded,
    logits_batched,
    loss_cross_entropy,
    margin,
    margin_gradient,
    max_abs_activation_profile,
    predict,
    standardize_activation_scale,
    value_and_grad,
)
from .layers import (
    DEFAULT_NEGATIVE_SLOPE,
    Activation,
    Conv2D,
    Dense,
    Flatten,
    LayerSpec,
    MaxPool2D,
)
from .network import Network, mlp_network, victim_network

__all__ = [
    "Activation",
    "ActivationProfile",
    "ClipBounds",
    "Conv2D",
    "DEFAULT_NEGATIVE_SLOPE",
    "Dense",
    "Flatten",
    "GradientBundle",
    "LayerSpec",
    "MIN_BOUND_MAGNITUDE",
    "MaxPool2D",
    "Network",
    "Objective",
    "activations",
    "backward",
    "check_finite",
    "forward",
    "forward_bounded",
    "logits_batched",
    "loss_cross_entropy",
    "margin",
    "margin_gradient",
    "max_abs_activation_profile",
    "mlp_network",
    "predict",
    "standardize_activation_scale",
    "value_and_grad",
    "victim_network",
]
