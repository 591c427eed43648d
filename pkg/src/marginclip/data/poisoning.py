"""
X2X label maps and construction of poisoned training / triggered test sets.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, EmptyDatasetError, NoEligibleSamplesError
from .dataset import Dataset
from .triggers import TriggerSpec, embed_trigger, validate_trigger

logger = logging.getLogger(__name__)

NOT_POISONABLE = -1


@dataclass(frozen=True)
class All2One:
    target: int


@dataclass(frozen=True)
class One2One:
    source: int
    target: int


@dataclass(frozen=True)
class All2All:
    pass


AttackMode = All2One | One2One | All2All


def mode_name(mode: AttackMode) -> str:
    return {All2One: "all2one", One2One: "one2one", All2All: "all2all"}[type(mode)]


@dataclass(eq=False)
class AttackConfig:
    """How triggers are embedded and which labels they are flipped to."""

    mode: AttackMode
    trigger: TriggerSpec
    poison_rate: float = 0.01
    seed: int = 0

    def validate(self, class_count: int, image_shape: tuple[int, int, int]) -> None:
        if not 0.0 < self.poison_rate <= 1.0:
            raise ConfigError("poison_rate must lie in (0, 1]")
        classes = []
        if isinstance(self.mode, All2One):
            classes = [self.mode.target]
        elif isinstance(self.mode, One2One):
            if self.mode.source == self.mode.target:
                raise ConfigError("one2one source and target must differ")
            classes = [self.mode.source, self.mode.target]
        if any(not 0 <= c < class_count for c in classes):
            raise ConfigError(f"attack classes must lie in [0, {class_count})")
        try:
            validate_trigger(self.trigger, image_shape)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def map_label(mode: AttackMode, y: int, class_count: int) -> int | None:
    """
    Attack label for a sample of class ``y``; None when it is not poisonable.

    all2one maps every class to the target, one2one maps only the source and
    all2all maps ``y`` to ``(y + 1) mod |Y|``.
    """
    if isinstance(mode, All2One):
        return mode.target
    if isinstance(mode, One2One):
        return mode.target if y == mode.source else None
    return (y + 1) % class_count


def map_labels(
    mode: AttackMode, labels: np.ndarray, class_count: int
) -> tuple[np.ndarray, np.ndarray]:
    """
    Vectorized ``map_label``.

    Returns:
        (mapped labels with NOT_POISONABLE where unmapped, eligibility mask);
        a sample is eligible when it maps to a label different from its own
    """
    labels = np.asarray(labels, dtype=np.int64)
    if isinstance(mode, All2One):
        mapped = np.full_like(labels, mode.target)
    elif isinstance(mode, One2One):
        mapped = np.where(labels == mode.source, mode.target, NOT_POISONABLE)
    else:
        mapped = (labels + 1) % class_count
    eligible = (mapped != NOT_POISONABLE) & (mapped != labels)
    return mapped, eligible


def poison_training_set(clean: Dataset, cfg: AttackConfig) -> tuple[Dataset, np.ndarray]:
    """
    Embed the trigger into a seeded random subset of eligible samples and relabel them.

    Args:
        clean: Clean training set
        cfg: Attack configuration

    Returns:
        (poisoned dataset, sorted poisoned indices)
    """
    cfg.validate(clean.class_count, clean.image_shape)
    mapped, eligible = map_labels(cfg.mode, clean.labels, clean.class_count)
    candidates = np.flatnonzero(eligible)
    if len(candidates) == 0:
        raise NoEligibleSamplesError("no training sample is eligible for poisoning")
    count = max(1, int(round(cfg.poison_rate * len(candidates))))
    rng = np.random.default_rng([cfg.seed, 2])
    chosen = np.sort(rng.choice(candidates, size=count, replace=False))

    images = clean.images.copy()
    labels = clean.labels.copy()
    images[chosen] = embed_trigger(clean.images[chosen], cfg.trigger)
    labels[chosen] = mapped[chosen]
    logger.info(
        "poisoned %d of %d eligible samples (%s)",
        count,
        len(candidates),
        mode_name(cfg.mode),
    )
    return (
        Dataset(images, labels, clean.class_count, chosen, mapped[chosen]),
        chosen,
    )


def make_trigger_testset(clean_test: Dataset, cfg: AttackConfig) -> Dataset:
    """
    Triggered copies of every poisonable test sample.

    ``labels`` keeps the original (source) class and ``intended`` holds the
    attack target, so both ASR and PACC can be measured. Samples already in
    their target class are excluded.
    """
    if len(clean_test) == 0:
        raise EmptyDatasetError("triggered test set needs a non-empty clean test set")
    cfg.validate(clean_test.class_count, clean_test.image_shape)
    mapped, eligible = map_labels(cfg.mode, clean_test.labels, clean_test.class_count)
    index = np.flatnonzero(eligible)
    images = embed_trigger(clean_test.images[index], cfg.trigger)
    return Dataset(
        images,
        clean_test.labels[index],
        clean_test.class_count,
        np.arange(len(index)),
        mapped[index],
    )


def duplicate_with_triggers(clean: Dataset, cfg: AttackConfig) -> tuple[Dataset, np.ndarray]:
    """
    Adaptive-attack training set: every eligible sample appears twice, once clean
    and once triggered with its attack label.

    Returns:
        (combined dataset, indices of the triggered copies)
    """
    cfg.validate(clean.class_count, clean.image_shape)
    mapped, eligible = map_labels(cfg.mode, clean.labels, clean.class_count)
    index = np.flatnonzero(eligible)
    if len(index) == 0:
        raise NoEligibleSamplesError("no sample is eligible for the adaptive attack")
    triggered = embed_trigger(clean.images[index], cfg.trigger)
    images = np.concatenate([clean.images, triggered])
    labels = np.concatenate([clean.labels, mapped[index]])
    backdoor = np.arange(len(clean), len(clean) + len(index))
    return (
        Dataset(images, labels, clean.class_count, backdoor, mapped[index]),
        backdoor,
    )
