"""
Victim training and adaptive attack command implementation
"""

import logging
from collections.abc import Callable
from dataclasses import replace
from pathlib import Path

from ..config import ExperimentConfig
from ..config import settings as names
from ..data import duplicate_with_triggers
from ..errors import ConfigError
from ..harness import RepetitionSeeds, adaptive_config, build_victim, finalize_victim
from ..output import write_adaptive_history, write_history
from ..serialization import load_checkpoint, load_dataset, save_checkpoint
from ..training import AdaptiveHistory, EpochRecord, TrainHistory, adaptive_attack, train
from .artifacts import artifact_path, load_optional_dataset, load_training_set

logger = logging.getLogger(__name__)


def train_command(
    cfg: ExperimentConfig,
    run_dir: Path,
    data_path: Path | None = None,
    checkpoint: Path | None = None,
    repetition: int = 0,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> tuple[TrainHistory, Path]:
    """
    Train a fresh victim on the run's training set.

    Per-epoch test ACC and ASR are recorded when the test splits are present.

    Returns:
        (training history, checkpoint path)
    """
    seeds = RepetitionSeeds.derive(cfg, repetition)
    training_set = load_training_set(run_dir, data_path)
    test = load_optional_dataset(run_dir / names.TEST_FILE)
    triggered = load_optional_dataset(run_dir / names.TRIGGERED_TEST_FILE)

    model, history = train(
        build_victim(cfg, seeds.model),
        training_set,
        replace(cfg.train, seed=seeds.train),
        test,
        triggered,
        on_epoch=on_epoch,
    )
    clean_train = load_optional_dataset(run_dir / names.CLEAN_TRAIN_FILE)
    model = finalize_victim(
        cfg, model, clean_train if clean_train is not None else training_set
    )
    write_history(run_dir / names.HISTORY_FILE, history.epochs, cfg.config_hash())
    path = save_checkpoint(artifact_path(run_dir, checkpoint, names.MODEL_FILE), model)
    logger.info("saved checkpoint %s", path)
    return history, path


def adaptive_attack_command(
    cfg: ExperimentConfig,
    run_dir: Path,
    checkpoint: Path | None = None,
    output: Path | None = None,
    repetition: int = 0,
) -> tuple[AdaptiveHistory, Path]:
    """
    Fine-tune a backdoored checkpoint so its triggered activations stay under
    the bounds a defender would learn.

    Returns:
        (adaptive history, path of the fine-tuned checkpoint)

    Raises:
        ConfigError: when no attack is configured
    """
    seeds = RepetitionSeeds.derive(cfg, repetition)
    attack = cfg.attack.build(cfg.data.image_shape, seeds.attack)
    if attack is None:
        raise ConfigError("the adaptive attack needs attack.mode other than 'none'")

    source = artifact_path(run_dir, checkpoint, names.MODEL_FILE)
    model, _ = load_checkpoint(source)
    clean_train = load_dataset(run_dir / names.CLEAN_TRAIN_FILE)
    clean_set = load_dataset(run_dir / names.CLEAN_SET_FILE)

    adaptive_set, backdoor = duplicate_with_triggers(clean_train, attack)
    model, history = adaptive_attack(
        model, adaptive_set, backdoor, adaptive_config(cfg, seeds, clean_set)
    )
    write_adaptive_history(run_dir / names.ADAPTIVE_FILE, history, cfg.config_hash())
    path = save_checkpoint(output if output is not None else source, model)
    logger.info("saved adaptively fine-tuned checkpoint %s", path)
    return history, path
