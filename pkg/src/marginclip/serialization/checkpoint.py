"""
Binary checkpoint format for networks with optional clip bounds.

Layout (little-endian)::

    "MMCK"  u32 version (=1)
    u32 class_count
    u32 input rank, then u32 per input dimension
    u32 layer count, then per layer:
        u8 kind tag
        dense       u32 in, u32 out; f32 weight[in*out]; f32 bias[out]
        conv2d      u32 in, u32 out, u32 kernel, u32 stride, u32 padding;
                    f32 weight[k*k*in*out] (k, k, in, out order); f32 bias[out]
        maxpool2d   u32 pool, u32 stride
        flatten     (nothing)
        activation  u8 function (0 relu, 1 leaky_relu), f64 negative slope
    optional bounds block:
    "ZBND"  u32 layer count, u8 two-sided flag
        per activation layer: u32 width, f32 upper[width], f32 lower[width] if two-sided

Parameters are always stored as float32; +inf bounds are stored as +inf.
"""

import logging
from pathlib import Path

import numpy as np

from ..errors import ArtifactFormatError, ArtifactMissingError
from ..nn import Activation, ClipBounds, Conv2D, Dense, Flatten, LayerSpec, MaxPool2D, Network
from .binary import BinaryReader, BinaryWriter

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"MMCK"
BOUNDS_MAGIC = b"ZBND"
CHECKPOINT_VERSION = 1
F32 = "<f4"

KIND_TAGS = {"dense": 1, "conv2d": 2, "maxpool2d": 3, "flatten": 4, "activation": 5}
ACTIVATION_CODES = {"relu": 0, "leaky_relu": 1}


def _write_layer(w: BinaryWriter, layer: LayerSpec) -> None:
    w.u8(KIND_TAGS[layer.kind])
    if isinstance(layer, Dense):
        w.u32(layer.in_features)
        w.u32(layer.out_features)
        w.array(layer.weight, F32)
        w.array(layer.bias, F32)
    elif isinstance(layer, Conv2D):
        for value in (
            layer.in_channels,
            layer.out_channels,
            layer.kernel_size,
            layer.stride,
            layer.padding,
        ):
            w.u32(value)
        w.array(layer.weight, F32)
        w.array(layer.bias, F32)
    elif isinstance(layer, MaxPool2D):
        assert layer.stride is not None
        w.u32(layer.pool_size)
        w.u32(layer.stride)
    elif isinstance(layer, Activation):
        w.u8(ACTIVATION_CODES[layer.function])
        w.f64(layer.negative_slope)


def _read_layer(r: BinaryReader) -> LayerSpec:
    tag = r.u8()
    if tag == KIND_TAGS["dense"]:
        fan_in, fan_out = r.u32(), r.u32()
        weight = r.array(F32, (fan_in, fan_out))
        return Dense(fan_in, fan_out, weight, r.array(F32, (fan_out,)))
    if tag == KIND_TAGS["conv2d"]:
        cin, cout, k, stride, padding = (r.u32() for _ in range(5))
        weight = r.array(F32, (k, k, cin, cout))
        return Conv2D(cin, cout, k, stride, padding, weight, r.array(F32, (cout,)))
    if tag == KIND_TAGS["maxpool2d"]:
        return MaxPool2D(r.u32(), r.u32())
    if tag == KIND_TAGS["flatten"]:
        return Flatten()
    if tag == KIND_TAGS["activation"]:
        code = r.u8()
        functions = {v: k for k, v in ACTIVATION_CODES.items()}
        if code not in functions:
            raise ArtifactFormatError(f"unknown activation code {code}")
        return Activation(functions[code], r.f64())  # type: ignore[arg-type]
    raise ArtifactFormatError(f"unknown layer kind tag {tag}")


def _write_bounds(w: BinaryWriter, bounds: ClipBounds) -> None:
    w.magic(BOUNDS_MAGIC)
    w.u32(bounds.layer_count)
    w.u8(1 if bounds.two_sided else 0)
    for i, upper in enumerate(bounds.upper):
        w.u32(len(upper))
        w.array(upper, F32)
        if bounds.lower is not None:
            w.array(bounds.lower[i], F32)


def _read_bounds(r: BinaryReader) -> ClipBounds:
    r.magic(BOUNDS_MAGIC)
    count = r.u32()
    two_sided = r.u8() == 1
    upper, lower = [], []
    for _ in range(count):
        width = r.u32()
        upper.append(r.array(F32, (width,)).astype(np.float32))
        if two_sided:
            lower.append(r.array(F32, (width,)).astype(np.float32))
    return ClipBounds(upper, lower if two_sided else None)


def encode_checkpoint(net: Network, bounds: ClipBounds | None = None) -> bytes:
    """Serialize ``net`` (and optionally its bounds) to bytes."""
    if net.dtype != np.float32:
        logger.warning("checkpoint stores float32; %s parameters are narrowed", net.dtype)
    if bounds is not None:
        bounds.validate_for(net)
    w = BinaryWriter()
    w.magic(CHECKPOINT_MAGIC)
    w.u32(CHECKPOINT_VERSION)
    w.u32(net.class_count)
    w.u32(len(net.input_shape))
    for dim in net.input_shape:
        w.u32(dim)
    w.u32(len(net.layers))
    for layer in net.layers:
        _write_layer(w, layer)
    if bounds is not None:
        _write_bounds(w, bounds)
    return w.getvalue()


def decode_checkpoint(data: bytes) -> tuple[Network, ClipBounds | None]:
    """
    Parse checkpoint bytes.

    Raises:
        ArtifactFormatError: on wrong magic, version, truncation or garbage
    """
    r = BinaryReader(data, "checkpoint")
    r.magic(CHECKPOINT_MAGIC)
    version = r.u32()
    if version != CHECKPOINT_VERSION:
        raise ArtifactFormatError(f"unsupported checkpoint version {version}")
    class_count = r.u32()
    input_shape = tuple(r.u32() for _ in range(r.u32()))
    layers = [_read_layer(r) for _ in range(r.u32())]
    net = Network(input_shape, layers, class_count)
    bounds = None
    if r.remaining:
        bounds = _read_bounds(r)
        bounds.validate_for(net)
    r.expect_end()
    return net, bounds


def encode_bounds(bounds: ClipBounds) -> bytes:
    """A standalone bounds file is a bare "ZBND" block."""
    w = BinaryWriter()
    _write_bounds(w, bounds)
    return w.getvalue()


def decode_bounds(data: bytes) -> ClipBounds:
    r = BinaryReader(data, "bounds file")
    bounds = _read_bounds(r)
    r.expect_end()
    return bounds


def _read_file(path: Path, what: str) -> bytes:
    if not path.exists():
        raise ArtifactMissingError(f"{what} not found: {path}")
    return path.read_bytes()


def save_checkpoint(path: Path, net: Network, bounds: ClipBounds | None = None) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(net, bounds))
    logger.debug("wrote checkpoint %s", path)
    return path


def load_checkpoint(path: Path) -> tuple[Network, ClipBounds | None]:
    return decode_checkpoint(_read_file(path, "checkpoint"))


def save_bounds(path: Path, bounds: ClipBounds) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_bounds(bounds))
    return path


def load_bounds(path: Path) -> ClipBounds:
    """Load bounds from a bare "ZBND" file or from a checkpoint's trailer."""
    data = _read_file(path, "bounds file")
    if data[:4] == CHECKPOINT_MAGIC:
        _, bounds = decode_checkpoint(data)
        if bounds is None:
            raise ArtifactMissingError(f"checkpoint {path} carries no bounds")
        return bounds
    return decode_bounds(data)
