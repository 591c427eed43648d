"""
Backdoor trigger patterns and their embedding into images.
"""

from dataclasses import dataclass
from typing import Literal

import numpy as np

from ..errors import ShapeError

TriggerKind = Literal["chessboard", "patch", "blend"]

DEFAULT_CHESSBOARD_INTENSITY = 3.0 / 255.0
DEFAULT_PATCH_SIZE = (3, 3)
DEFAULT_BLEND_RATIO = 0.2


@dataclass(frozen=True, eq=False)
class Chessboard:
    """Global additive +/- pattern: ``x' = clamp(x + intensity * P)``."""

    intensity: float = DEFAULT_CHESSBOARD_INTENSITY


@dataclass(frozen=True, eq=False)
class Patch:
    """Pixels inside the region are replaced by ``pixels``."""

    size: tuple[int, int]
    location: tuple[int, int]
    pixels: np.ndarray


@dataclass(frozen=True, eq=False)
class BlendPatch:
    """Region set to ``(1 - ratio) * x + ratio * pixels``."""

    ratio: float
    size: tuple[int, int]
    location: tuple[int, int]
    pixels: np.ndarray


TriggerSpec = Chessboard | Patch | BlendPatch


def trigger_kind(trigger: TriggerSpec) -> TriggerKind:
    if isinstance(trigger, Chessboard):
        return "chessboard"
    if isinstance(trigger, BlendPatch):
        return "blend"
    return "patch"


def validate_trigger(trigger: TriggerSpec, image_shape: tuple[int, int, int]) -> None:
    """Raise ShapeError/ValueError when the trigger cannot apply to ``image_shape``."""
    if isinstance(trigger, Chessboard):
        if trigger.intensity <= 0:
            raise ValueError("chessboard intensity must be positive")
        return
    if isinstance(trigger, BlendPatch) and not 0.0 < trigger.ratio < 1.0:
        raise ValueError("blend ratio must lie in (0, 1)")
    h, w, c = image_shape
    (ph, pw), (row, col) = trigger.size, trigger.location
    if ph <= 0 or pw <= 0 or row < 0 or col < 0 or row + ph > h or col + pw > w:
        raise ShapeError(
            f"patch of size {trigger.size} at {trigger.location} does not fit a {h}x{w} image"
        )
    if trigger.pixels.shape != (ph, pw, c):
        raise ShapeError(f"patch pixels must have shape {(ph, pw, c)}")


def chessboard_pattern(height: int, width: int, channels: int) -> np.ndarray:
    """+1 where (row + col) is even, -1 otherwise, identical across channels."""
    parity = np.add.outer(np.arange(height), np.arange(width)) % 2
    pattern = np.where(parity == 0, 1.0, -1.0)
    return np.repeat(pattern[:, :, None], channels, axis=2)


def trigger_mask(trigger: TriggerSpec, image_shape: tuple[int, int, int]) -> np.ndarray:
    """Boolean ``[H, W, C]`` support of the trigger."""
    h, w, c = image_shape
    mask = np.zeros(image_shape, dtype=bool)
    if isinstance(trigger, Chessboard):
        mask[:] = True
        return mask
    (ph, pw), (row, col) = trigger.size, trigger.location
    mask[row : row + ph, col : col + pw, :] = True
    return mask


def embed_trigger(x: np.ndarray, trigger: TriggerSpec) -> np.ndarray:
    """
    Embed ``trigger`` into one image ``[H, W, C]`` or a batch ``[N, H, W, C]``.

    Args:
        x: Image(s) with values in [0, 1]
        trigger: Trigger specification

    Returns:
        New array of the same shape and dtype, values in [0, 1]
    """
    x = np.asarray(x)
    image_shape = x.shape[-3:]
    validate_trigger(trigger, image_shape)  # type: ignore[arg-type]
    if isinstance(trigger, Chessboard):
        pattern = chessboard_pattern(*image_shape)
        return np.clip(x + trigger.intensity * pattern, 0.0, 1.0).astype(x.dtype)

    out = x.copy()
    (ph, pw), (row, col) = trigger.size, trigger.location
    region = (..., slice(row, row + ph), slice(col, col + pw), slice(None))
    if isinstance(trigger, BlendPatch):
        blended = (1.0 - trigger.ratio) * x[region] + trigger.ratio * trigger.pixels
        out[region] = np.clip(blended, 0.0, 1.0)
    else:
        out[region] = trigger.pixels
    return out


def make_trigger(
    kind: TriggerKind,
    image_shape: tuple[int, int, int],
    seed: int,
    intensity: float = DEFAULT_CHESSBOARD_INTENSITY,
    patch_size: tuple[int, int] = DEFAULT_PATCH_SIZE,
    blend_ratio: float = DEFAULT_BLEND_RATIO,
    location: tuple[int, int] | None = None,
) -> TriggerSpec:
    """
    Build a trigger whose random content and location are fixed by ``seed``.

    Patch location (unless given) and pixels are drawn once, so every poisoned
    training sample and every triggered test sample share them. Patch pixels
    are black or white.
    """
    if kind == "chessboard":
        trigger: TriggerSpec = Chessboard(intensity)
        validate_trigger(trigger, image_shape)
        return trigger
    h, w, c = image_shape
    ph, pw = patch_size
    if ph > h or pw > w:
        raise ShapeError(f"patch {patch_size} larger than image {h}x{w}")
    rng = np.random.default_rng([seed, 7])
    if location is None:
        location = (int(rng.integers(0, h - ph + 1)), int(rng.integers(0, w - pw + 1)))
    pixels = rng.integers(0, 2, size=(ph, pw, c)).astype(np.float32)
    if kind == "blend":
        trigger = BlendPatch(blend_ratio, (ph, pw), location, pixels)
    elif kind == "patch":
        trigger = Patch((ph, pw), location, pixels)
    else:
        raise ValueError(f"unknown trigger kind '{kind}'")
    validate_trigger(trigger, image_shape)
    return trigger
