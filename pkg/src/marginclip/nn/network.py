"""
Layered feedforward classifier.
"""

import copy
from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteError, ShapeError
from .layers import (
    DEFAULT_NEGATIVE_SLOPE,
    Activation,
    ActivationKind,
    Conv2D,
    Dense,
    Flatten,
    LayerSpec,
    MaxPool2D,
    Shape,
)


@dataclass(eq=False)
class Network:
    """
    Ordered list of layers mapping an input of ``input_shape`` to
    ``class_count`` logits.

    The final layer must be parametric (never an activation) so logits stay
    unbounded. Shapes are checked when the network is built.
    """

    input_shape: Shape
    layers: list[LayerSpec]
    class_count: int
    layer_shapes: list[Shape] = field(init=False, repr=False)

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        if self.class_count < 2:
            raise ShapeError("a classifier needs at least two classes")
        if not self.layers:
            raise ShapeError("network has no layers")
        if isinstance(self.layers[-1], Activation | Flatten | MaxPool2D):
            raise ShapeError("the final layer must produce logits, not activations")

        shapes = []
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
            shapes.append(shape)
        if shape != (self.class_count,):
            raise ShapeError(
                f"network outputs {shape}, expected ({self.class_count},) logits"
            )
        self.layer_shapes = shapes

        for layer in self.layers:
            for name, value in layer.params().items():
                if not np.all(np.isfinite(value)):
                    raise NonFiniteError(f"{layer.kind}.{name} contains NaN or Inf")

    @property
    def dtype(self) -> np.dtype:
        for layer in self.layers:
            for value in layer.params().values():
                return value.dtype
        return np.dtype(np.float32)

    @property
    def activation_indices(self) -> list[int]:
        """Layer indices of the activation layers, in forward order."""
        return [i for i, layer in enumerate(self.layers) if isinstance(layer, Activation)]

    @property
    def bound_widths(self) -> list[int]:
        """Number of clip scalars per activation layer (units or channels)."""
        return [self.layer_shapes[i][-1] for i in self.activation_indices]

    @property
    def leaky(self) -> bool:
        """True when every activation layer is a LeakyReLU."""
        acts = [self.layers[i] for i in self.activation_indices]
        return bool(acts) and all(
            isinstance(a, Activation) and a.leaky for a in acts
        )

    def parameters(self) -> list[dict[str, np.ndarray]]:
        return [layer.params() for layer in self.layers]

    def parameter_count(self) -> int:
        return sum(v.size for p in self.parameters() for v in p.values())

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def astype(self, dtype: np.dtype | type) -> "Network":
        """Return a copy whose parameters use ``dtype`` (float64 for verification)."""
        clone = self.copy()
        for layer in clone.layers:
            if isinstance(layer, Dense | Conv2D):
                assert layer.weight is not None and layer.bias is not None
                layer.weight = layer.weight.astype(dtype)
                layer.bias = layer.bias.astype(dtype)
        return clone

    def initialize(self, seed: int) -> "Network":
        """He-normal weights and zero biases, in place; returns self."""
        rng = np.random.default_rng(seed)
        dtype = self.dtype
        for layer in self.layers:
            if isinstance(layer, Dense):
                scale = np.sqrt(2.0 / layer.in_features)
                layer.weight = (
                    rng.standard_normal(layer.weight.shape) * scale  # type: ignore[union-attr]
                ).astype(dtype)
                layer.bias = np.zeros(layer.out_features, dtype)
            elif isinstance(layer, Conv2D):
                fan_in = layer.kernel_size**2 * layer.in_channels
                scale = np.sqrt(2.0 / fan_in)
                layer.weight = (
                    rng.standard_normal(layer.weight.shape) * scale  # type: ignore[union-attr]
                ).astype(dtype)
                layer.bias = np.zeros(layer.out_channels, dtype)
        return self


def victim_network(
    input_shape: Shape,
    class_count: int,
    activation: ActivationKind = "relu",
    negative_slope: float = DEFAULT_NEGATIVE_SLOPE,
    seed: int = 0,
) -> Network:
    """
    Default victim: conv(16)-pool-conv(32)-pool-dense(64)-dense(|Y|).

    Args:
        input_shape: (H, W, C) image shape
        class_count: Number of classes
        activation: "relu" or "leaky_relu"
        negative_slope: LeakyReLU slope (ignored for relu)
        seed: Initialization seed

    Returns:
        A freshly initialized float32 network
    """
    h, w, c = input_shape

    def act() -> Activation:
        return Activation(activation, negative_slope)

    flat = (h // 4) * (w // 4) * 32
    layers: list[LayerSpec] = [
        Conv2D(c, 16, 3, padding=1),
        act(),
        MaxPool2D(2),
        Conv2D(16, 32, 3, padding=1),
        act(),
        MaxPool2D(2),
        Flatten(),
        Dense(flat, 64),
        act(),
        Dense(64, class_count),
    ]
    return Network(tuple(input_shape), layers, class_count).initialize(seed)


def mlp_network(
    input_features: int,
    hidden: list[int],
    class_count: int,
    activation: ActivationKind = "relu",
    negative_slope: float = DEFAULT_NEGATIVE_SLOPE,
    seed: int = 0,
) -> Network:
    """Dense-only network, mostly useful for small experiments and tests."""
    layers: list[LayerSpec] = []
    width = input_features
    for units in hidden:
        layers.extend([Dense(width, units), Activation(activation, negative_slope)])
        width = units
    layers.append(Dense(width, class_count))
    return Network((input_features,), layers, class_count).initialize(seed)
