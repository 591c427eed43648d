"""
Artifact locations and loading shared by the subcommands.

Every subcommand works inside a run directory using the standard file names;
explicit paths override individual files.
"""

from pathlib import Path

from ..config import settings as names
from ..data import Dataset
from ..errors import ArtifactMissingError
from ..serialization import load_dataset


def artifact_path(run_dir: Path, explicit: Path | None, default_name: str) -> Path:
    """``explicit`` when given, else ``run_dir / default_name``."""
    return explicit if explicit is not None else run_dir / default_name


def load_optional_dataset(path: Path) -> Dataset | None:
    return load_dataset(path) if path.exists() else None


def load_training_set(run_dir: Path, explicit: Path | None = None) -> Dataset:
    """The poisoned training split when one exists, else the clean one."""
    if explicit is not None:
        return load_dataset(explicit)
    poisoned = run_dir / names.POISONED_TRAIN_FILE
    if poisoned.exists():
        return load_dataset(poisoned)
    clean = run_dir / names.CLEAN_TRAIN_FILE
    if not clean.exists():
        raise ArtifactMissingError(f"no training set in {run_dir}; run gen-data first")
    return load_dataset(clean)
