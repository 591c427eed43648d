"""
Adaptive attacker that fine-tunes a backdoored network to keep its backdoor
activations below the defender's learned bounds.

Each outer round learns bounds on the current network from the defender's
clean set, then fine-tunes the parameters on cross-entropy over the poisoned
set plus ``beta`` times the hinge overshoot of backdoor activations above
those bounds.
"""

import logging
from collections.abc import Iterator
from dataclasses import dataclass, field

import numpy as np

from ..data import Dataset
from ..errors import ConfigError, EmptyDatasetError, TrainingDivergedError
from ..mitigation import MmacConfig, run_mmac
from ..nn import ClipBounds, GradientBundle, Network, activations, value_and_grad
from .trainer import SGD, TrainConfig, add_gradients, cross_entropy_step, iterate_minibatches

logger = logging.getLogger(__name__)


@dataclass
class AdaptiveConfig:
    beta: float = 1.0
    outer_rounds: int = 3
    finetune_steps_per_round: int = 100
    mmac: MmacConfig = field(default_factory=MmacConfig)
    finetune: TrainConfig = field(default_factory=lambda: TrainConfig(learning_rate=0.01))
    clean_subset: Dataset | None = field(default=None, repr=False)

    def validate(self) -> None:
        if self.beta < 0:
            raise ConfigError("beta must be non-negative")
        if self.outer_rounds < 1:
            raise ConfigError("outer_rounds must be at least 1")
        if self.finetune_steps_per_round < 0:
            raise ConfigError("finetune_steps_per_round must be non-negative")
        self.mmac.validate()
        self.finetune.validate()


@dataclass
class AdaptiveRound:
    round: int
    bounds: ClipBounds = field(repr=False)
    mean_loss: float
    mean_penalty: float


@dataclass
class AdaptiveHistory:
    rounds: list[AdaptiveRound] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)


def _overshoot(acts: list[np.ndarray], z: ClipBounds) -> list[np.ndarray]:
    return [np.maximum(a - u, 0) for a, u in zip(acts, z.upper, strict=True)]


def penalty_term(net: Network, z: ClipBounds, x: np.ndarray) -> float:
    """
    Mean over activation layers of the mean hinge overshoot ``max(0, phi - z)``
    of the unbounded activations ``phi`` above their upper bounds.

    Channel bounds broadcast over spatial positions; each layer's mean runs
    over the batch and every unit of that layer.
    """
    z.validate_for(net)
    overshoot = _overshoot(activations(net, x), z)
    return float(np.mean([o.astype(np.float64).mean() for o in overshoot]))


def penalty_gradient(net: Network, z: ClipBounds, x: np.ndarray) -> tuple[float, GradientBundle]:
    """``penalty_term`` and its gradients with respect to parameters and input."""
    z.validate_for(net)
    layers = len(z.upper)

    def objective(logits, acts):
        overshoot = _overshoot(acts, z)
        value = float(np.mean([o.astype(np.float64).mean() for o in overshoot]))
        d_acts = [
            (a > u).astype(a.dtype) / (layers * a.size)
            for a, u in zip(acts, z.upper, strict=True)
        ]
        return value, np.zeros_like(logits), d_acts

    value, _, grads = value_and_grad(net, None, x, objective)
    return value, grads


def _batch_stream(
    size: int, cfg: TrainConfig, rng: np.random.Generator
) -> Iterator[tuple[int, np.ndarray]]:
    epoch = 0
    while True:
        for batch in iterate_minibatches(size, cfg.batch_size, rng):
            yield epoch, batch
        epoch += 1


def adaptive_attack(
    net: Network,
    poisoned: Dataset,
    backdoor_indices: np.ndarray,
    cfg: AdaptiveConfig,
) -> tuple[Network, AdaptiveHistory]:
    """
    Alternate bound estimation and penalty-regularized fine-tuning.

    The fine-tuning batches follow the same shuffled stream ``train`` would
    draw for ``cfg.finetune``, continued across rounds; with ``beta == 0`` the
    loss trajectory therefore matches plain training step for step.

    Args:
        net: Backdoored network (left untouched)
        poisoned: Poisoned training set D_p
        backdoor_indices: Indices of the triggered samples D_b within ``poisoned``
        cfg: Attack configuration, including the defender's clean set

    Returns:
        (fine-tuned network, history)

    Raises:
        EmptyDatasetError: when the backdoor subset is empty
        ConfigError: when no clean set is available for bound estimation
        TrainingDivergedError: if the loss becomes non-finite
    """
    cfg.validate()
    backdoor_indices = np.asarray(backdoor_indices, dtype=np.int64)
    if len(backdoor_indices) == 0:
        raise EmptyDatasetError("the backdoor subset is empty")
    if cfg.clean_subset is None:
        raise ConfigError("adaptive attack needs the defender's clean subset")

    model = net.copy()
    history = AdaptiveHistory()
    finetune = cfg.finetune
    stream = _batch_stream(len(poisoned), finetune, np.random.default_rng(finetune.seed))
    penalty_rng = np.random.default_rng([finetune.seed, 5])
    optimizer = SGD(model, finetune.learning_rate, finetune.momentum, finetune.weight_decay)
    penalty_batch = min(finetune.batch_size, len(backdoor_indices))

    for round_index in range(cfg.outer_rounds):
        bounds = run_mmac(model, cfg.clean_subset, cfg.mmac).z_star
        losses: list[float] = []
        penalties: list[float] = []
        for _ in range(cfg.finetune_steps_per_round):
            epoch, batch = next(stream)
            optimizer.learning_rate = finetune.learning_rate_at(epoch)
            loss, _, grads = cross_entropy_step(
                model, poisoned.images[batch], poisoned.labels[batch]
            )
            if cfg.beta > 0:
                chosen = penalty_rng.choice(backdoor_indices, size=penalty_batch, replace=False)
                penalty, penalty_grads = penalty_gradient(model, bounds, poisoned.images[chosen])
                grads = add_gradients(grads, penalty_grads.d_params, cfg.beta)
                loss += cfg.beta * penalty
                penalties.append(penalty)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            optimizer.step(grads)
            losses.append(loss)

        history.step_losses.extend(losses)
        record = AdaptiveRound(
            round=round_index,
            bounds=bounds,
            mean_loss=float(np.mean(losses)) if losses else 0.0,
            mean_penalty=float(np.mean(penalties)) if penalties else 0.0,
        )
        history.rounds.append(record)
        logger.info(
            "adaptive round %d: loss=%.4f penalty=%.4f",
            round_index,
            record.mean_loss,
            record.mean_penalty,
        )
    return model, history
