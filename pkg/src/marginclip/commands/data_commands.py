"""
Dataset generation and poisoning command implementation
"""

import logging
from pathlib import Path

from ..config import ExperimentConfig
from ..config import settings as names
from ..harness import RepetitionSeeds, generate_data, poison_data
from ..serialization import save_dataset

logger = logging.getLogger(__name__)


def gen_data_command(cfg: ExperimentConfig, run_dir: Path, repetition: int = 0) -> list[Path]:
    """
    Generate the synthetic splits and, when an attack is configured, poison them.

    Args:
        cfg: Effective configuration
        run_dir: Directory receiving the dataset files
        repetition: Repetition whose seeds are used

    Returns:
        The dataset files written
    """
    seeds = RepetitionSeeds.derive(cfg, repetition)
    data = generate_data(cfg, seeds)
    poison_data(cfg, seeds, data)

    run_dir.mkdir(parents=True, exist_ok=True)
    written = [
        save_dataset(run_dir / names.CLEAN_TRAIN_FILE, data.train),
        save_dataset(run_dir / names.CLEAN_SET_FILE, data.clean),
        save_dataset(run_dir / names.TEST_FILE, data.test),
    ]
    if data.poisoned is not None and data.triggered is not None:
        written.append(save_dataset(run_dir / names.POISONED_TRAIN_FILE, data.poisoned))
        written.append(save_dataset(run_dir / names.TRIGGERED_TEST_FILE, data.triggered))
        poisoned_count = data.poisoned.poison_indices.size if data.poisoned.is_poisoned else 0
        logger.info("poisoned %d of %d training samples", poisoned_count, len(data.poisoned))
    else:
        # No attack: drop attack files left by an earlier run
        for stale in (names.POISONED_TRAIN_FILE, names.TRIGGERED_TEST_FILE):
            (run_dir / stale).unlink(missing_ok=True)
    return written
