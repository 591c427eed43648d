"""
Configuration module for marginclip
"""

from .settings import (
    ATTACK_MODES,
    CORRECTION_MODES,
    DEFAULT_CONFIG_FILE,
    DEFAULT_OUTPUT_ROOT,
    DEFENSES,
    OUTPUT_ROOT_ENV,
    TRIGGER_KINDS,
)
from .toml_loader import (
    AdaptiveSettings,
    AttackSettings,
    DataConfig,
    DetectionConfig,
    ExperimentConfig,
    ExperimentSettings,
    ModelConfig,
    get_effective_config,
    parse_overrides,
)

__all__ = [
    "ATTACK_MODES",
    "AdaptiveSettings",
    "AttackSettings",
    "CORRECTION_MODES",
    "DEFAULT_CONFIG_FILE",
    "DEFAULT_OUTPUT_ROOT",
    "DEFENSES",
    "DataConfig",
    "DetectionConfig",
    "ExperimentConfig",
    "ExperimentSettings",
    "ModelConfig",
    "OUTPUT_ROOT_ENV",
    "TRIGGER_KINDS",
    "get_effective_config",
    "parse_overrides",
]
