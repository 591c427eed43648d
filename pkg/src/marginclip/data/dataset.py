"""
Labeled image datasets and the synthetic desk-scale generator.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import hadamard

from ..errors import ConfigError, EmptyDatasetError, ShapeError

logger = logging.getLogger(__name__)

DEFAULT_CONTRAST = 0.15
SEPARATION_FACTOR = 5.0


@dataclass(eq=False)
class Dataset:
    """
    Images ``[N, H, W, C]`` in [0, 1] with integer labels.

    ``poison_indices`` and ``intended`` (aligned arrays) record which samples
    carry a trigger and the label the attack wants for them. For triggered
    test sets ``labels`` keeps the original source class.
    """

    images: np.ndarray
    labels: np.ndarray
    class_count: int
    poison_indices: np.ndarray | None = None
    intended: np.ndarray | None = None

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ShapeError(f"images must be [N, H, W, C], got {self.images.shape}")
        if len(self.labels) != len(self.images):
            raise ShapeError("images and labels differ in length")
        if self.class_count < 2:
            raise ShapeError("a dataset needs at least two classes")
        if self.images.size and (
            not np.isfinite(self.images).all()
            or self.images.min() < 0.0
            or self.images.max() > 1.0
        ):
            raise ShapeError("pixel values must be finite and lie in [0, 1]")
        if self.labels.size and (
            self.labels.min() < 0 or self.labels.max() >= self.class_count
        ):
            raise ShapeError(f"labels must lie in [0, {self.class_count})")
        if (self.poison_indices is None) != (self.intended is None):
            raise ShapeError("poison_indices and intended must be given together")
        if self.poison_indices is not None and self.intended is not None:
            self.poison_indices = np.asarray(self.poison_indices, dtype=np.int64)
            self.intended = np.asarray(self.intended, dtype=np.int64)
            if self.poison_indices.shape != self.intended.shape:
                raise ShapeError("poison_indices and intended differ in length")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        h, w, c = self.images.shape[1:]
        return (h, w, c)

    @property
    def is_poisoned(self) -> bool:
        return self.poison_indices is not None

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)

    def subset(self, indices: np.ndarray) -> "Dataset":
        """Samples at ``indices`` (in that order), carrying poison bookkeeping along."""
        indices = np.asarray(indices, dtype=np.int64)
        poison = intended = None
        if self.poison_indices is not None and self.intended is not None:
            position = np.full(len(self), -1, dtype=np.int64)
            position[indices] = np.arange(len(indices))
            kept = position[self.poison_indices] >= 0
            poison = position[self.poison_indices[kept]]
            intended = self.intended[kept]
            order = np.argsort(poison, kind="stable")
            poison, intended = poison[order], intended[order]
        return Dataset(
            self.images[indices],
            self.labels[indices],
            self.class_count,
            poison,
            intended,
        )

    def split(self, fraction: float, seed: int) -> tuple["Dataset", "Dataset"]:
        """
        Random split into (first, rest) with ``round(fraction * N)`` samples first.

        Args:
            fraction: Share of samples in the first part, in [0, 1]
            seed: Permutation seed

        Returns:
            Tuple of two disjoint datasets
        """
        if not 0.0 <= fraction <= 1.0:
            raise ValueError("split fraction must lie in [0, 1]")
        order = np.random.default_rng(seed).permutation(len(self))
        cut = int(round(fraction * len(self)))
        return self.subset(np.sort(order[:cut])), self.subset(np.sort(order[cut:]))


def _code_grid(classes: int, height: int, width: int) -> int:
    """Side of the smallest square cell grid whose Hadamard code covers ``classes``."""
    grid = 2
    while grid * grid < classes:
        grid *= 2
    if grid > min(height, width):
        raise ConfigError(
            f"{classes} classes need a {grid}x{grid} code grid, "
            f"larger than the {height}x{width} image"
        )
    return grid


def class_prototypes(
    classes: int,
    height: int,
    width: int,
    channels: int,
    noise_sigma: float,
    seed: int,
    contrast: float = DEFAULT_CONTRAST,
) -> np.ndarray:
    """
    One block-pattern prototype per class around mid-grey.

    Each channel is a grid of cells set to ``0.5 +/- contrast``; the sign
    pattern of a class is a distinct Hadamard row, so two classes differ in
    half of the cells of every channel. The seed shuffles rows and flips cell
    signs, which leaves every pairwise distance unchanged.

    Raises:
        ConfigError: when the classes do not fit the image, or the closest pair
            is not farther apart than ``5 * noise_sigma * sqrt(H*W*C)``
    """
    if not 0.0 < contrast <= 0.5:
        raise ConfigError("prototype contrast must lie in (0, 0.5]")
    grid = _code_grid(classes, height, width)
    codes = hadamard(grid * grid)
    rng = np.random.default_rng(seed)
    cells = np.empty((classes, grid * grid, channels))
    for k in range(channels):
        rows = rng.permutation(grid * grid)[:classes]
        flips = rng.choice([-1.0, 1.0], size=grid * grid)
        cells[:, :, k] = codes[rows] * flips
    cells = cells.reshape(classes, grid, grid, channels)
    row_cell = np.arange(height) * grid // height
    col_cell = np.arange(width) * grid // width
    prototypes = 0.5 + contrast * cells[:, row_cell][:, :, col_cell]

    flat = prototypes.reshape(classes, -1)
    distances = np.linalg.norm(flat[:, None] - flat[None], axis=-1)
    closest = distances[~np.eye(classes, dtype=bool)].min()
    threshold = SEPARATION_FACTOR * noise_sigma * np.sqrt(height * width * channels)
    if closest <= threshold:
        raise ConfigError(
            f"closest prototypes are {closest:.3f} apart, need more than {threshold:.3f}; "
            "lower data.noise_sigma or raise data.contrast"
        )
    logger.debug("prototype separation %.3f (threshold %.3f)", closest, threshold)
    return prototypes


def generate_synthetic(
    classes: int,
    per_class: int,
    height: int,
    width: int,
    channels: int,
    noise_sigma: float,
    seed: int,
    sample_stream: int = 0,
    contrast: float = DEFAULT_CONTRAST,
) -> Dataset:
    """
    Gaussian-noise samples around fixed block-pattern class prototypes.

    The prototypes depend only on ``seed`` (and the geometry), so train and test
    splits drawn with different ``sample_stream`` values share them.

    Args:
        classes: Number of classes
        per_class: Samples per class
        height: Image height
        width: Image width
        channels: Image channels
        noise_sigma: Per-pixel noise standard deviation
        seed: Prototype and noise seed
        sample_stream: Selects an independent noise stream for the same prototypes
        contrast: Prototype cell amplitude around mid-grey

    Returns:
        Class-major Dataset with pixels clamped to [0, 1]
    """
    if min(classes, per_class, height, width, channels) <= 0:
        raise EmptyDatasetError("synthetic dataset sizes must be positive")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    prototypes = class_prototypes(
        classes, height, width, channels, noise_sigma, seed, contrast
    )
    labels = np.repeat(np.arange(classes), per_class)
    noise_rng = np.random.default_rng([seed, 1 + sample_stream])
    noise = noise_rng.standard_normal((len(labels), height, width, channels))
    images = np.clip(prototypes[labels] + noise_sigma * noise, 0.0, 1.0)
    logger.debug(
        "generated %d synthetic samples (%d classes, sigma=%.3f)",
        len(labels),
        classes,
        noise_sigma,
    )
    return Dataset(images.astype(np.float32), labels, classes)
