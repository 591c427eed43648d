"""
Victim training and the adaptive attacker.
"""

from .adaptive import (
    AdaptiveConfig,
    AdaptiveHistory,
    AdaptiveRound,
    adaptive_attack,
    penalty_gradient,
    penalty_term,
)
from .trainer import (
    SGD,
    EpochRecord,
    TrainConfig,
    TrainHistory,
    add_gradients,
    attack_success_rate,
    cross_entropy_step,
    iterate_minibatches,
    train,
)

__all__ = [
    "AdaptiveConfig",
    "AdaptiveHistory",
    "AdaptiveRound",
    "EpochRecord",
    "SGD",
    "TrainConfig",
    "TrainHistory",
    "adaptive_attack",
    "add_gradients",
    "attack_success_rate",
    "cross_entropy_step",
    "iterate_minibatches",
    "penalty_gradient",
    "penalty_term",
    "train",
]
