"""
Forward passes, reverse-mode gradients, margins and losses.

Inputs always carry a leading batch axis. When bounds are given, every
activation output is ``min(h, upper)`` (then ``max(., lower)`` for two-sided
bounds); the logit layer is never clipped.
"""

from collections.abc import Callable
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.special import log_softmax, softmax

from ..errors import EmptyDatasetError, NonFiniteError, ShapeError
from .bounds import MIN_BOUND_MAGNITUDE, ClipBounds, GradientBundle
from .layers import Activation, Conv2D, Dense, Flatten, MaxPool2D, Shape
from .network import Network

DEFAULT_BATCH_SIZE = 512
ACTIVATION_SCALE_QUANTILE = 0.99
DEFAULT_SCALE_SAMPLES = 512


def _as_input(net: Network, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=net.dtype)
    if x.shape[1:] != net.input_shape:
        raise ShapeError(
            f"input shape {x.shape[1:]} does not match network input {net.input_shape}"
        )
    return x


def check_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    """Raise NonFiniteError when ``x`` holds NaN or Inf; returns ``x``."""
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{what} contains NaN or Inf")
    return x


def _bounds_at(z: ClipBounds | None, slot: int) -> tuple[Any, Any]:
    if z is None:
        return None, None
    lower = z.lower[slot] if z.lower is not None else None
    return z.upper[slot], lower


def _forward_cached(
    net: Network, z: ClipBounds | None, x: np.ndarray
) -> tuple[np.ndarray, list[Any], list[np.ndarray]]:
    """Run the network keeping per-layer caches and activation outputs."""
    if z is not None:
        z.validate_for(net)
    out = _as_input(net, x)
    caches: list[Any] = []
    activations: list[np.ndarray] = []
    slot = 0
    for layer in net.layers:
        if isinstance(layer, Activation):
            upper, lower = _bounds_at(z, slot)
            out, cache = layer.forward(out, upper, lower)
            activations.append(out)
            slot += 1
        else:
            out, cache = layer.forward(out)
        caches.append(cache)
    return out, caches, activations


def forward(net: Network, x: np.ndarray) -> np.ndarray:
    """
    Unbounded logits ``f(x)``.

    Args:
        net: Network to evaluate
        x: Batch of inputs shaped ``[N, *net.input_shape]``

    Returns:
        Logits shaped ``[N, net.class_count]``
    """
    return _forward_cached(net, None, x)[0]


def forward_bounded(net: Network, z: ClipBounds, x: np.ndarray) -> np.ndarray:
    """Logits of the bounded network ``f(x; Z)``."""
    return _forward_cached(net, z, x)[0]


def activations(
    net: Network, x: np.ndarray, z: ClipBounds | None = None
) -> list[np.ndarray]:
    """Post-activation (post-clip when ``z`` is given) outputs of every activation layer."""
    return _forward_cached(net, z, x)[2]


Objective = Callable[
    [np.ndarray, list[np.ndarray]],
    tuple[float, np.ndarray, list[np.ndarray | None] | None],
]


def _backprop(
    net: Network,
    z: ClipBounds | None,
    caches: list[Any],
    d_logits: np.ndarray,
    d_activations: list[np.ndarray | None] | None,
) -> GradientBundle:
    bounds = z if z is not None else ClipBounds.unbounded(net, two_sided=False)
    d_bounds = ClipBounds.zeros_like(bounds)
    d_params: list[dict[str, np.ndarray]] = [{} for _ in net.layers]

    grad = d_logits
    slot = len(net.activation_indices)
    for index in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[index]
        cache = caches[index]
        if isinstance(layer, Activation):
            slot -= 1
            if d_activations is not None and d_activations[slot] is not None:
                grad = grad + d_activations[slot]
            grad, d_upper, d_lower = layer.backward_bounded(grad, cache)
            if d_upper is not None:
                d_bounds.upper[slot] = d_upper
            if d_lower is not None and d_bounds.lower is not None:
                d_bounds.lower[slot] = d_lower
        else:
            grad, d_params[index] = layer.backward(grad, cache)
    return GradientBundle(d_params=d_params, d_input=grad, d_bounds=d_bounds)


def _checked_upstream(
    logits: np.ndarray,
    acts: list[np.ndarray],
    d_logits: np.ndarray,
    d_activations: list[np.ndarray | None] | None,
) -> np.ndarray:
    d_logits = np.asarray(d_logits, dtype=logits.dtype)
    if d_logits.shape != logits.shape:
        raise ShapeError(f"upstream gradient {d_logits.shape} != logits {logits.shape}")
    check_finite(d_logits, "upstream gradient")
    if d_activations is not None and len(d_activations) != len(acts):
        raise ShapeError("d_activations must have one entry per activation layer")
    return d_logits


def backward(
    net: Network,
    z: ClipBounds | None,
    x: np.ndarray,
    d_logits: np.ndarray,
    d_activations: list[np.ndarray | None] | None = None,
) -> GradientBundle:
    """
    Reverse-mode gradients of ``sum(d_logits * logits)``.

    The forward pass is re-run internally. ``d_activations`` optionally adds
    upstream gradient directly at each activation layer output, which is how
    losses on internal activations (the adaptive-attack penalty) are
    differentiated.

    Args:
        net: Network
        z: Bounds, or None for the unbounded network
        x: Input batch
        d_logits: Upstream gradient shaped like the logits
        d_activations: Optional per-activation-layer upstream gradients

    Returns:
        GradientBundle with parameter, input and bound gradients
    """
    logits, caches, acts = _forward_cached(net, z, x)
    d_logits = _checked_upstream(logits, acts, d_logits, d_activations)
    return _backprop(net, z, caches, d_logits, d_activations)


def value_and_grad(
    net: Network,
    z: ClipBounds | None,
    x: np.ndarray,
    objective: Objective,
) -> tuple[float, np.ndarray, GradientBundle]:
    """
    Evaluate a scalar objective of the logits (and activations) with a single
    forward pass and differentiate it.

    Args:
        net: Network
        z: Bounds, or None
        x: Input batch
        objective: ``(logits, activations) -> (value, d_logits, d_activations)``

    Returns:
        (objective value, logits, gradients)
    """
    logits, caches, acts = _forward_cached(net, z, x)
    value, d_logits, d_activations = objective(logits, acts)
    d_logits = _checked_upstream(logits, acts, d_logits, d_activations)
    return value, logits, _backprop(net, z, caches, d_logits, d_activations)


def logits_batched(
    net: Network,
    images: np.ndarray,
    z: ClipBounds | None = None,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> np.ndarray:
    """Logits for a large array of inputs, evaluated in fixed-size chunks."""
    if len(images) == 0:
        return np.zeros((0, net.class_count), dtype=net.dtype)
    chunks = [
        _forward_cached(net, z, images[start : start + batch_size])[0]
        for start in range(0, len(images), batch_size)
    ]
    return np.concatenate(chunks, axis=0)


def predict(
    net: Network,
    images: np.ndarray,
    z: ClipBounds | None = None,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> np.ndarray:
    """Argmax class per input (lowest index wins ties)."""
    return logits_batched(net, images, z, batch_size).argmax(axis=1)


def _class_column(logits: np.ndarray, c: int | np.ndarray) -> np.ndarray:
    n, k = logits.shape
    if k < 2:
        raise ShapeError("margins need at least two logits")
    classes = np.broadcast_to(np.asarray(c, dtype=np.int64), (n,))
    if np.any(classes < 0) or np.any(classes >= k):
        raise ShapeError(f"class index out of range [0, {k})")
    return classes


def _runner_up(logits: np.ndarray, classes: np.ndarray) -> np.ndarray:
    others = logits.copy()
    others[np.arange(len(logits)), classes] = -np.inf
    return others.argmax(axis=1)


def margin(logits: np.ndarray, c: int | np.ndarray) -> np.ndarray:
    """
    Classification margin ``logits[c] - max_{k != c} logits[k]`` per row.

    Args:
        logits: ``[N, |Y|]`` logits
        c: Class index, or one index per row

    Returns:
        ``[N]`` margins; positive iff ``c`` is the unique argmax
    """
    logits = np.atleast_2d(logits)
    classes = _class_column(logits, c)
    rows = np.arange(len(logits))
    return logits[rows, classes] - logits[rows, _runner_up(logits, classes)]


def margin_gradient(logits: np.ndarray, c: int | np.ndarray) -> np.ndarray:
    """d margin / d logits: +1 at ``c``, -1 at the first strongest competitor."""
    logits = np.atleast_2d(logits)
    classes = _class_column(logits, c)
    rows = np.arange(len(logits))
    grad = np.zeros_like(logits)
    grad[rows, classes] = 1
    grad[rows, _runner_up(logits, classes)] = -1
    return grad


def loss_cross_entropy(
    logits: np.ndarray, y: np.ndarray | int
) -> tuple[float, np.ndarray]:
    """
    Mean softmax cross-entropy and its gradient ``(softmax - onehot) / N``.

    Uses a log-sum-exp formulation so saturated logits stay finite.
    """
    logits = np.atleast_2d(logits)
    labels = _class_column(logits, y)
    rows = np.arange(len(logits))
    log_probs = log_softmax(logits.astype(np.float64), axis=1)
    loss = float(-log_probs[rows, labels].mean())
    grad = softmax(logits.astype(np.float64), axis=1)
    grad[rows, labels] -= 1.0
    grad /= len(logits)
    return loss, grad.astype(logits.dtype)


@dataclass
class ActivationProfile:
    """Per activation layer, per unit/channel extreme post-activation values."""

    maxima: list[np.ndarray]
    minima: list[np.ndarray]
    sample_count: int


def max_abs_activation_profile(
    net: Network,
    images: np.ndarray,
    z: ClipBounds | None = None,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> ActivationProfile:
    """
    Max and min activation of each unit (dense) or feature map (conv) over a dataset.

    Args:
        net: Network to profile
        images: ``[N, ...]`` inputs, N >= 1
        z: Optional bounds; the profile is then taken on the bounded network
        batch_size: Evaluation chunk size

    Returns:
        ActivationProfile with one vector per activation layer
    """
    if len(images) == 0:
        raise EmptyDatasetError("cannot profile activations of an empty dataset")
    maxima: list[np.ndarray] | None = None
    minima: list[np.ndarray] | None = None
    for start in range(0, len(images), batch_size):
        acts = activations(net, images[start : start + batch_size], z)
        axes = [tuple(range(a.ndim - 1)) for a in acts]
        batch_max = [a.max(axis=ax) for a, ax in zip(acts, axes, strict=True)]
        batch_min = [a.min(axis=ax) for a, ax in zip(acts, axes, strict=True)]
        if maxima is None or minima is None:
            maxima, minima = batch_max, batch_min
        else:
            maxima = [np.maximum(a, b) for a, b in zip(maxima, batch_max, strict=True)]
            minima = [np.minimum(a, b) for a, b in zip(minima, batch_min, strict=True)]
    assert maxima is not None and minima is not None
    return ActivationProfile(maxima=maxima, minima=minima, sample_count=len(images))


def _next_parametric(net: Network, index: int) -> tuple[Dense | Conv2D, Shape | None]:
    """The dense or conv layer fed by activation ``index``, and the flattened shape if any."""
    flattened: Shape | None = None
    for j in range(index + 1, len(net.layers)):
        layer = net.layers[j]
        if isinstance(layer, Dense | Conv2D):
            return layer, flattened
        if isinstance(layer, Flatten):
            flattened = net.layer_shapes[j - 1]
        elif not isinstance(layer, MaxPool2D):
            break
    raise ShapeError(f"activation layer {index} does not feed a dense or conv layer")


def standardize_activation_scale(
    net: Network,
    images: np.ndarray,
    quantile: float = ACTIVATION_SCALE_QUANTILE,
    max_samples: int = DEFAULT_SCALE_SAMPLES,
) -> Network:
    """
    Copy of ``net`` computing the same logits, with every activation unit (or
    conv channel) rescaled so its ``quantile`` magnitude over ``images`` is 1.

    The layer feeding an activation is divided by the unit scale and the next
    dense or conv layer multiplied back. ReLU, LeakyReLU and max pooling commute
    with positive per-channel scales. Units that stay silent keep scale 1.

    Args:
        net: Network to rescale
        images: Clean inputs; at most ``max_samples`` evenly strided ones are used
        quantile: Activation magnitude quantile mapped to 1, in (0, 1]
        max_samples: Sample cap for the activation pass

    Returns:
        A new Network; ``net`` is unchanged

    Raises:
        EmptyDatasetError: on an empty image array
        ShapeError: when an activation is not produced and consumed by dense or
            conv layers through pooling and flattening only
    """
    if len(images) == 0:
        raise EmptyDatasetError("cannot rescale activations without images")
    if not 0.0 < quantile <= 1.0:
        raise ValueError("quantile must lie in (0, 1]")
    stride = max(1, len(images) // max_samples)
    acts = activations(net, images[::stride][:max_samples])
    clone = net.copy()
    for slot, index in enumerate(clone.activation_indices):
        units = acts[slot].shape[-1]
        scale = np.quantile(np.abs(acts[slot]).reshape(-1, units), quantile, axis=0)
        scale = np.where(scale > MIN_BOUND_MAGNITUDE, scale, 1.0).astype(clone.dtype)

        producer = clone.layers[index - 1]
        if not isinstance(producer, Dense | Conv2D):
            raise ShapeError(f"activation layer {index} is not fed by a dense or conv layer")
        assert producer.weight is not None and producer.bias is not None
        producer.weight = producer.weight / scale
        producer.bias = producer.bias / scale

        consumer, flattened = _next_parametric(clone, index)
        assert consumer.weight is not None
        if isinstance(consumer, Conv2D):
            consumer.weight = consumer.weight * scale[:, None]
        elif flattened is not None:
            positions = int(np.prod(flattened[:-1]))
            consumer.weight = consumer.weight * np.tile(scale, positions)[:, None]
        else:
            consumer.weight = consumer.weight * scale[:, None]
    return clone
