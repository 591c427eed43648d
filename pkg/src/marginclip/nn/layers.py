"""
Layer definitions for the feedforward network engine.

All layers operate on a leading batch axis and images use NHWC layout.
``forward`` returns the output together with a cache that ``backward``
consumes; ``backward`` returns the input gradient and a dict of parameter
gradients keyed like ``params()``.
"""

from dataclasses import dataclass
from typing import Any, ClassVar, Literal

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError

Shape = tuple[int, ...]
ActivationKind = Literal["relu", "leaky_relu"]

DEFAULT_NEGATIVE_SLOPE = 0.1


@dataclass(eq=False)
class Dense:
    """Fully connected layer: ``y = x @ weight + bias``."""

    in_features: int
    out_features: int
    weight: np.ndarray | None = None
    bias: np.ndarray | None = None

    kind: ClassVar[str] = "dense"

    def __post_init__(self):
        if self.in_features <= 0 or self.out_features <= 0:
            raise ShapeError("dense widths must be positive")
        if self.weight is None:
            self.weight = np.zeros((self.in_features, self.out_features), np.float32)
        if self.bias is None:
            self.bias = np.zeros(self.out_features, np.float32)
        if self.weight.shape != (self.in_features, self.out_features):
            raise ShapeError(
                f"dense weight shape {self.weight.shape} does not match "
                f"({self.in_features}, {self.out_features})"
            )
        if self.bias.shape != (self.out_features,):
            raise ShapeError(f"dense bias shape {self.bias.shape} is wrong")

    def output_shape(self, input_shape: Shape) -> Shape:
        if tuple(input_shape) != (self.in_features,):
            raise ShapeError(
                f"dense layer expects ({self.in_features},), got {tuple(input_shape)}"
            )
        return (self.out_features,)

    def params(self) -> dict[str, np.ndarray]:
        assert self.weight is not None and self.bias is not None
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, Any]:
        assert self.weight is not None and self.bias is not None
        return x @ self.weight + self.bias, x

    def backward(
        self, dy: np.ndarray, cache: Any
    ) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        assert self.weight is not None
        x = cache
        return dy @ self.weight.T, {"weight": x.T @ dy, "bias": dy.sum(axis=0)}


@dataclass(eq=False)
class Conv2D:
    """2-D convolution over NHWC input with a (k, k, in, out) kernel."""

    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int = 1
    padding: int = 0
    weight: np.ndarray | None = None
    bias: np.ndarray | None = None

    kind: ClassVar[str] = "conv2d"

    def __post_init__(self):
        if min(self.in_channels, self.out_channels, self.kernel_size, self.stride) <= 0:
            raise ShapeError("conv2d sizes and stride must be positive")
        if self.padding < 0:
            raise ShapeError("conv2d padding must be non-negative")
        k = self.kernel_size
        if self.weight is None:
            self.weight = np.zeros(
                (k, k, self.in_channels, self.out_channels), np.float32
            )
        if self.bias is None:
            self.bias = np.zeros(self.out_channels, np.float32)
        if self.weight.shape != (k, k, self.in_channels, self.out_channels):
            raise ShapeError(f"conv2d weight shape {self.weight.shape} is wrong")
        if self.bias.shape != (self.out_channels,):
            raise ShapeError(f"conv2d bias shape {self.bias.shape} is wrong")

    def output_shape(self, input_shape: Shape) -> Shape:
        if len(input_shape) != 3 or input_shape[2] != self.in_channels:
            raise ShapeError(
                f"conv2d expects (H, W, {self.in_channels}), got {tuple(input_shape)}"
            )
        h, w, _ = input_shape
        out_h = (h + 2 * self.padding - self.kernel_size) // self.stride + 1
        out_w = (w + 2 * self.padding - self.kernel_size) // self.stride + 1
        if out_h <= 0 or out_w <= 0:
            raise ShapeError(f"conv2d kernel does not fit input {tuple(input_shape)}")
        return (out_h, out_w, self.out_channels)

    def params(self) -> dict[str, np.ndarray]:
        assert self.weight is not None and self.bias is not None
        return {"weight": self.weight, "bias": self.bias}

    def _im2col(self, x: np.ndarray) -> tuple[np.ndarray, int, int]:
        k, s, p = self.kernel_size, self.stride, self.padding
        if p:
            x = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
        windows = sliding_window_view(x, (k, k), axis=(1, 2))[:, ::s, ::s]
        n, out_h, out_w = windows.shape[:3]
        # [N, Ho, Wo, C, kh, kw] -> rows ordered (kh, kw, C) to match the kernel
        cols = windows.transpose(0, 1, 2, 4, 5, 3).reshape(n * out_h * out_w, -1)
        return cols, out_h, out_w

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, Any]:
        assert self.weight is not None and self.bias is not None
        cols, out_h, out_w = self._im2col(x)
        kernel = self.weight.reshape(-1, self.out_channels)
        y = cols @ kernel + self.bias
        return y.reshape(x.shape[0], out_h, out_w, self.out_channels), (cols, x.shape)

    def backward(
        self, dy: np.ndarray, cache: Any
    ) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        assert self.weight is not None
        cols, x_shape = cache
        n, h, w, c = x_shape
        k, s, p = self.kernel_size, self.stride, self.padding
        out_h, out_w = dy.shape[1], dy.shape[2]

        dy_rows = dy.reshape(-1, self.out_channels)
        kernel = self.weight.reshape(-1, self.out_channels)
        d_weight = (cols.T @ dy_rows).reshape(self.weight.shape)
        d_bias = dy_rows.sum(axis=0)

        d_cols = (dy_rows @ kernel.T).reshape(n, out_h, out_w, k, k, c)
        dx = np.zeros((n, h + 2 * p, w + 2 * p, c), dtype=dy.dtype)
        for i in range(k):
            for j in range(k):
                dx[
                    :, i : i + s * (out_h - 1) + 1 : s, j : j + s * (out_w - 1) + 1 : s
                ] += d_cols[:, :, :, i, j, :]
        if p:
            dx = dx[:, p : p + h, p : p + w]
        return dx, {"weight": d_weight, "bias": d_bias}


@dataclass(eq=False)
class MaxPool2D:
    """Max pooling; gradients route to the first maximal element on ties."""

    pool_size: int = 2
    stride: int | None = None

    kind: ClassVar[str] = "maxpool2d"

    def __post_init__(self):
        if self.stride is None:
            self.stride = self.pool_size
        if self.pool_size <= 0 or self.stride <= 0:
            raise ShapeError("maxpool2d sizes must be positive")

    def output_shape(self, input_shape: Shape) -> Shape:
        assert self.stride is not None
        if len(input_shape) != 3:
            raise ShapeError(f"maxpool2d expects (H, W, C), got {tuple(input_shape)}")
        h, w, c = input_shape
        out_h = (h - self.pool_size) // self.stride + 1
        out_w = (w - self.pool_size) // self.stride + 1
        if out_h <= 0 or out_w <= 0:
            raise ShapeError(f"pool window does not fit input {tuple(input_shape)}")
        return (out_h, out_w, c)

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, Any]:
        k, s = self.pool_size, self.stride
        windows = sliding_window_view(x, (k, k), axis=(1, 2))[:, ::s, ::s]
        flat = windows.reshape(*windows.shape[:4], k * k)
        argmax = flat.argmax(axis=-1)
        y = np.take_along_axis(flat, argmax[..., None], axis=-1)[..., 0]
        return y, (argmax, x.shape)

    def backward(
        self, dy: np.ndarray, cache: Any
    ) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        argmax, x_shape = cache
        k, s = self.pool_size, self.stride
        assert s is not None
        out_h, out_w = dy.shape[1], dy.shape[2]
        dx = np.zeros(x_shape, dtype=dy.dtype)
        for i in range(k):
            for j in range(k):
                routed = np.where(argmax == i * k + j, dy, 0)
                dx[
                    :, i : i + s * (out_h - 1) + 1 : s, j : j + s * (out_w - 1) + 1 : s
                ] += routed
        return dx, {}


@dataclass(eq=False)
class Flatten:
    kind: ClassVar[str] = "flatten"

    def output_shape(self, input_shape: Shape) -> Shape:
        return (int(np.prod(input_shape)),)

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, Any]:
        return x.reshape(x.shape[0], -1), x.shape

    def backward(
        self, dy: np.ndarray, cache: Any
    ) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        return dy.reshape(cache), {}


@dataclass(eq=False)
class Activation:
    """
    ReLU or LeakyReLU with optional saturation bounds.

    Bounds hold one scalar per unit (dense) or per channel (conv) and broadcast
    over the trailing axis. The clip is applied after the activation function.
    """

    function: ActivationKind = "relu"
    negative_slope: float = DEFAULT_NEGATIVE_SLOPE

    kind: ClassVar[str] = "activation"

    def __post_init__(self):
        if self.function not in ("relu", "leaky_relu"):
            raise ShapeError(f"unknown activation '{self.function}'")
        if self.function == "leaky_relu" and not 0.0 < self.negative_slope < 1.0:
            raise ShapeError("leaky_relu negative_slope must lie in (0, 1)")

    @property
    def leaky(self) -> bool:
        return self.function == "leaky_relu"

    def output_shape(self, input_shape: Shape) -> Shape:
        return tuple(input_shape)

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def activate(self, x: np.ndarray) -> np.ndarray:
        if self.leaky:
            return np.where(x > 0, x, x * x.dtype.type(self.negative_slope))
        return np.maximum(x, 0)

    def forward(
        self,
        x: np.ndarray,
        upper: np.ndarray | None = None,
        lower: np.ndarray | None = None,
    ) -> tuple[np.ndarray, Any]:
        h = self.activate(x)
        out = h
        if upper is not None:
            out = np.minimum(out, upper)
        if lower is not None:
            out = np.maximum(out, lower)
        return out, (x, h, upper, lower)

    def backward_bounded(
        self, dy: np.ndarray, cache: Any
    ) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
        """
        Backpropagate through the clip and the activation.

        Subgradients: d/dh = 1[lower < h < upper], d/d upper = 1[h >= upper],
        d/d lower = 1[h <= lower], ReLU derivative 1[x > 0].

        Returns:
            (d_input, d_upper, d_lower); bound gradients are None when the
            corresponding bound was not applied.
        """
        x, h, upper, lower = cache
        reduce_axes = tuple(range(dy.ndim - 1))
        passthrough = dy
        d_upper = d_lower = None
        if upper is not None:
            clipped = h >= upper
            d_upper = np.where(clipped, dy, 0).sum(axis=reduce_axes)
            passthrough = np.where(clipped, 0, passthrough)
        if lower is not None:
            clipped = h <= lower
            d_lower = np.where(clipped, dy, 0).sum(axis=reduce_axes)
            passthrough = np.where(clipped, 0, passthrough)
        if self.leaky:
            slope = x.dtype.type(self.negative_slope)
            dx = passthrough * np.where(x > 0, x.dtype.type(1), slope)
        else:
            dx = np.where(x > 0, passthrough, 0)
        return dx.astype(dy.dtype, copy=False), d_upper, d_lower

    def backward(
        self, dy: np.ndarray, cache: Any
    ) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        dx, _, _ = self.backward_bounded(dy, cache)
        return dx, {}


LayerSpec = Dense | Conv2D | MaxPool2D | Flatten | Activation
