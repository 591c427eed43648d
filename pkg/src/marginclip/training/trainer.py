"""
Mini-batch SGD training of victim classifiers.
"""

import logging
from collections.abc import Callable, Iterator
from dataclasses import dataclass, field

import numpy as np

from ..data import Dataset
from ..errors import ConfigError, TrainingDivergedError
from ..nn import Network, loss_cross_entropy, predict, value_and_grad

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    """SGD hyperparameters; the learning rate is multiplied by ``lr_gamma`` at each milestone epoch."""

    epochs: int = 15
    batch_size: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0
    lr_milestones: tuple[int, ...] = (10,)
    lr_gamma: float = 0.1

    def validate(self) -> None:
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.batch_size <= 0:
            raise ConfigError("batch_size must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")
        if not 0.0 < self.lr_gamma <= 1.0:
            raise ConfigError("lr_gamma must lie in (0, 1]")

    def learning_rate_at(self, epoch: int) -> float:
        decays = sum(1 for m in self.lr_milestones if epoch >= m)
        return self.learning_rate * self.lr_gamma**decays


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    train_acc: float
    test_acc: float | None = None
    asr: float | None = None


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)

    @property
    def final_test_acc(self) -> float | None:
        return self.epochs[-1].test_acc if self.epochs else None


class SGD:
    """SGD with momentum and L2 weight decay, updating parameters in place."""

    def __init__(
        self,
        net: Network,
        learning_rate: float,
        momentum: float = 0.9,
        weight_decay: float = 0.0,
    ):
        self.net = net
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [
            {name: np.zeros_like(value) for name, value in params.items()}
            for params in net.parameters()
        ]

    def step(self, d_params: list[dict[str, np.ndarray]]) -> None:
        for params, grads, velocity in zip(
            self.net.parameters(), d_params, self.velocity, strict=True
        ):
            for name, value in params.items():
                grad = grads[name] + self.weight_decay * value
                velocity[name] *= self.momentum
                velocity[name] += grad
                value -= self.learning_rate * velocity[name]


def iterate_minibatches(
    size: int, batch_size: int, rng: np.random.Generator
) -> Iterator[np.ndarray]:
    """One epoch of shuffled index batches; the last batch may be short."""
    order = rng.permutation(size)
    for start in range(0, size, batch_size):
        yield order[start : start + batch_size]


def add_gradients(
    a: list[dict[str, np.ndarray]], b: list[dict[str, np.ndarray]], scale: float = 1.0
) -> list[dict[str, np.ndarray]]:
    return [
        {name: ga[name] + scale * gb[name] for name in ga}
        for ga, gb in zip(a, b, strict=True)
    ]


def cross_entropy_step(
    net: Network, images: np.ndarray, labels: np.ndarray
) -> tuple[float, int, list[dict[str, np.ndarray]]]:
    """
    Cross-entropy loss, number of correct predictions and parameter gradients
    for one batch of the unbounded network.
    """

    def objective(logits, _acts):
        loss, d_logits = loss_cross_entropy(logits, labels)
        return loss, d_logits, None

    loss, logits, grads = value_and_grad(net, None, images, objective)
    correct = int((logits.argmax(axis=1) == labels).sum())
    return loss, correct, grads.d_params


def attack_success_rate(net: Network, triggered: Dataset) -> float:
    """Fraction of triggered samples classified as their intended target."""
    if triggered.intended is None or len(triggered) == 0:
        raise ValueError("triggered set carries no intended labels")
    predictions = predict(net, triggered.images[triggered.poison_indices])
    return float((predictions == triggered.intended).mean())


def train(
    net: Network,
    dataset: Dataset,
    cfg: TrainConfig,
    test: Dataset | None = None,
    triggered: Dataset | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> tuple[Network, TrainHistory]:
    """
    Train a copy of ``net`` with cross-entropy SGD.

    Args:
        net: Initial network (left untouched)
        dataset: Training set (possibly poisoned)
        cfg: Training hyperparameters
        test: Optional clean test set for per-epoch ACC
        triggered: Optional triggered test set for per-epoch ASR
        on_epoch: Optional callback receiving each EpochRecord

    Returns:
        (trained network, history)

    Raises:
        TrainingDivergedError: if the loss becomes non-finite
    """
    cfg.validate()
    model = net.copy()
    history = TrainHistory()
    rng = np.random.default_rng(cfg.seed)
    optimizer = SGD(model, cfg.learning_rate, cfg.momentum, cfg.weight_decay)

    for epoch in range(cfg.epochs):
        optimizer.learning_rate = cfg.learning_rate_at(epoch)
        total_loss = 0.0
        total_correct = 0
        for batch in iterate_minibatches(len(dataset), cfg.batch_size, rng):
            loss, correct, grads = cross_entropy_step(
                model, dataset.images[batch], dataset.labels[batch]
            )
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            optimizer.step(grads)
            history.step_losses.append(loss)
            total_loss += loss * len(batch)
            total_correct += correct

        record = EpochRecord(
            epoch=epoch,
            loss=total_loss / len(dataset),
            train_acc=total_correct / len(dataset),
        )
        if test is not None:
            record.test_acc = float((predict(model, test.images) == test.labels).mean())
        if triggered is not None:
            record.asr = attack_success_rate(model, triggered)
        history.epochs.append(record)
        logger.debug(
            "epoch %d loss=%.4f train_acc=%.4f test_acc=%s asr=%s",
            epoch,
            record.loss,
            record.train_acc,
            record.test_acc,
            record.asr,
        )
        if on_epoch is not None:
            on_epoch(record)
    return model, history
