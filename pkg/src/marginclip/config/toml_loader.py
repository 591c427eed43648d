"""
TOML experiment configuration loading and processing
"""

import copy
import dataclasses
import hashlib
import json
import os
import tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..data import (
    DEFAULT_CONTRAST,
    All2All,
    All2One,
    AttackConfig,
    One2One,
    class_prototypes,
    make_trigger,
)
from ..errors import ConfigError
from ..mitigation import MmacConfig
from ..nn import DEFAULT_NEGATIVE_SLOPE
from ..training import TrainConfig
from .settings import (
    ATTACK_MODES,
    CORRECTION_MODES,
    DEFAULT_ATTACK_MODE,
    DEFAULT_CHANNELS,
    DEFAULT_CLASSES,
    DEFAULT_CLEAN_FRACTION,
    DEFAULT_CONFIG_FILE,
    DEFAULT_CORRECTION_MODE,
    DEFAULT_EXPERIMENT_NAME,
    DEFAULT_HEIGHT,
    DEFAULT_NOISE_SIGMA,
    DEFAULT_OUTPUT_ROOT,
    DEFAULT_POISON_RATES,
    DEFAULT_REPETITIONS,
    DEFAULT_SOURCE,
    DEFAULT_TARGET,
    DEFAULT_TEST_PER_CLASS,
    DEFAULT_THETA,
    DEFAULT_TRAIN_PER_CLASS,
    DEFAULT_TRIGGER,
    DEFAULT_WIDTH,
    OUTPUT_ROOT_ENV,
    TRIGGER_KINDS,
)


@dataclass
class DataConfig:
    classes: int = DEFAULT_CLASSES
    height: int = DEFAULT_HEIGHT
    width: int = DEFAULT_WIDTH
    channels: int = DEFAULT_CHANNELS
    train_per_class: int = DEFAULT_TRAIN_PER_CLASS
    test_per_class: int = DEFAULT_TEST_PER_CLASS
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    contrast: float = DEFAULT_CONTRAST
    clean_fraction: float = DEFAULT_CLEAN_FRACTION
    seed: int = 0

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.channels)

    def validate(self) -> None:
        if self.classes < 2:
            raise ConfigError("data.classes must be at least 2")
        if min(self.height, self.width, self.channels) <= 0:
            raise ConfigError("data image dimensions must be positive")
        if self.height % 4 or self.width % 4:
            raise ConfigError("data.height and data.width must be multiples of 4")
        if self.train_per_class <= 0 or self.test_per_class <= 0:
            raise ConfigError("per-class sample counts must be positive")
        if self.noise_sigma < 0:
            raise ConfigError("data.noise_sigma must be non-negative")
        if not 0.0 < self.contrast <= 0.5:
            raise ConfigError("data.contrast must lie in (0, 0.5]")
        if not 0.0 < self.clean_fraction < 1.0:
            raise ConfigError("data.clean_fraction must lie in (0, 1)")
        class_prototypes(
            self.classes,
            self.height,
            self.width,
            self.channels,
            self.noise_sigma,
            self.seed,
            self.contrast,
        )


@dataclass
class AttackSettings:
    mode: str = DEFAULT_ATTACK_MODE
    trigger: str = DEFAULT_TRIGGER
    target: int = DEFAULT_TARGET
    source: int = DEFAULT_SOURCE
    poison_rate: float | None = None
    intensity: float = 3.0 / 255.0
    patch_size: tuple[int, int] = (3, 3)
    blend_ratio: float = 0.2
    seed: int = 0

    @property
    def enabled(self) -> bool:
        return self.mode != "none"

    @property
    def effective_poison_rate(self) -> float:
        if self.poison_rate is not None:
            return self.poison_rate
        return DEFAULT_POISON_RATES[self.trigger]

    def validate(self, class_count: int) -> None:
        if self.mode not in ATTACK_MODES:
            raise ConfigError(f"attack.mode must be one of {', '.join(ATTACK_MODES)}")
        if self.trigger not in TRIGGER_KINDS:
            raise ConfigError(f"attack.trigger must be one of {', '.join(TRIGGER_KINDS)}")
        if not 0 <= self.target < class_count:
            raise ConfigError("attack.target is not a valid class")
        if self.mode == "one2one" and not 0 <= self.source < class_count:
            raise ConfigError("attack.source is not a valid class")
        if self.mode == "one2one" and self.source == self.target:
            raise ConfigError("attack.source and attack.target must differ")
        if not 0.0 < self.effective_poison_rate <= 1.0:
            raise ConfigError("attack.poison_rate must lie in (0, 1]")

    def build(
        self, image_shape: tuple[int, int, int], seed: int | None = None
    ) -> AttackConfig | None:
        """The AttackConfig for this section, or None when no attack is configured."""
        if not self.enabled:
            return None
        seed = self.seed if seed is None else seed
        if self.mode == "all2one":
            mode: All2One | One2One | All2All = All2One(self.target)
        elif self.mode == "one2one":
            mode = One2One(self.source, self.target)
        else:
            mode = All2All()
        try:
            trigger = make_trigger(
                self.trigger,  # type: ignore[arg-type]
                image_shape,
                seed,
                intensity=self.intensity,
                patch_size=tuple(self.patch_size),  # type: ignore[arg-type]
                blend_ratio=self.blend_ratio,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return AttackConfig(mode, trigger, self.effective_poison_rate, seed)


@dataclass
class ModelConfig:
    activation: str = "relu"
    negative_slope: float = DEFAULT_NEGATIVE_SLOPE
    # Rescale trained activations so a unit bound matches the clean range
    standardize: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.activation not in ("relu", "leaky_relu"):
            raise ConfigError("model.activation must be relu or leaky_relu")
        if not 0.0 < self.negative_slope < 1.0:
            raise ConfigError("model.negative_slope must lie in (0, 1)")


@dataclass
class DetectionConfig:
    theta: float = DEFAULT_THETA
    mode: str = DEFAULT_CORRECTION_MODE
    # Share of the clean set reserved for fitting the null (0 = share it with MMAC)
    holdout_fraction: float = 0.0

    def validate(self) -> None:
        if not 0.0 < self.theta < 1.0:
            raise ConfigError("detection.theta must lie in (0, 1)")
        if self.mode not in CORRECTION_MODES:
            raise ConfigError("detection.mode must be correct or reject")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ConfigError("detection.holdout_fraction must lie in [0, 1)")


@dataclass
class AdaptiveSettings:
    enabled: bool = False
    beta: float = 1.0
    outer_rounds: int = 3
    finetune_steps_per_round: int = 100
    learning_rate: float = 0.01

    def validate(self) -> None:
        if self.beta < 0:
            raise ConfigError("adaptive.beta must be non-negative")
        if self.outer_rounds < 1 or self.finetune_steps_per_round < 0:
            raise ConfigError("adaptive rounds must be >= 1 and steps >= 0")
        if self.learning_rate <= 0:
            raise ConfigError("adaptive.learning_rate must be positive")


@dataclass
class ExperimentSettings:
    name: str = DEFAULT_EXPERIMENT_NAME
    repetitions: int = DEFAULT_REPETITIONS
    output_dir: str | None = None
    seed: int = 0

    def validate(self) -> None:
        if self.repetitions < 1:
            raise ConfigError("experiment.repetitions must be at least 1")


SECTIONS: dict[str, type] = {
    "data": DataConfig,
    "attack": AttackSettings,
    "model": ModelConfig,
    "train": TrainConfig,
    "mmac": MmacConfig,
    "detection": DetectionConfig,
    "adaptive": AdaptiveSettings,
    "experiment": ExperimentSettings,
}


# Keys whose default is None, with the type a set value must have
_NULLABLE_TYPES: dict[tuple[str, str], type] = {
    ("attack", "poison_rate"): float,
    ("mmac", "two_sided"): bool,
    ("mmac", "top_k"): int,
    ("experiment", "output_dir"): str,
}


def _coerce(section: str, key: str, value: Any, default: Any) -> Any:
    if (section, key) in _NULLABLE_TYPES:
        expected = _NULLABLE_TYPES[(section, key)]
        if expected is float and isinstance(value, int) and not isinstance(value, bool):
            return float(value)
        if not isinstance(value, expected) or (expected is int and isinstance(value, bool)):
            raise ConfigError(
                f"{section}.{key} must be {expected.__name__}, got {type(value).__name__}"
            )
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list | tuple):
            raise ConfigError(f"{section}.{key} must be a list")
        return tuple(value)
    if isinstance(default, bool) and not isinstance(value, bool):
        raise ConfigError(f"{section}.{key} must be true or false")
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if default is not None and not isinstance(value, type(default)):
        raise ConfigError(
            f"{section}.{key} must be {type(default).__name__}, got {type(value).__name__}"
        )
    return value


def _apply(section: str, target: Any, values: dict[str, Any]) -> None:
    defaults = {f.name: getattr(target, f.name) for f in dataclasses.fields(target)}
    for key, value in values.items():
        if key not in defaults:
            raise ConfigError(f"unknown configuration key '{section}.{key}'")
        setattr(target, key, _coerce(section, key, value, defaults[key]))


@dataclass
class ExperimentConfig:
    """Configuration class for marginclip experiments"""

    data: DataConfig = field(default_factory=DataConfig)
    attack: AttackSettings = field(default_factory=AttackSettings)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    mmac: MmacConfig = field(default_factory=MmacConfig)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    adaptive: AdaptiveSettings = field(default_factory=AdaptiveSettings)
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        config = cls()
        for section, values in data.items():
            if section not in SECTIONS:
                raise ConfigError(f"unknown configuration table '[{section}]'")
            if not isinstance(values, dict):
                raise ConfigError(f"'{section}' must be a table")
            _apply(section, getattr(config, section), values)
        config.validate()
        return config

    @classmethod
    def from_toml(cls, config_path: Path | None = None) -> "ExperimentConfig":
        """
        Load configuration from TOML file.

        Args:
            config_path: Path to config file. If None, looks for marginclip.toml in cwd

        Returns:
            ExperimentConfig instance with loaded settings

        Raises:
            ConfigError: on invalid TOML, unknown keys or invalid values
        """
        if config_path is None:
            config_path = Path.cwd() / DEFAULT_CONFIG_FILE

        if not config_path.exists():
            return cls()

        try:
            with open(config_path, "rb") as f:
                data = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"Invalid TOML syntax in {config_path}: {e}") from e
        return cls.from_dict(data)

    def validate(self) -> None:
        self.data.validate()
        self.attack.validate(self.data.classes)
        self.model.validate()
        self.train.validate()
        self.mmac.validate()
        self.detection.validate()
        self.adaptive.validate()
        self.experiment.validate()

    def merge_with_cli(self, overrides: dict[str, Any] | None = None) -> "ExperimentConfig":
        """
        Merge configuration with CLI arguments. CLI arguments take precedence.

        Args:
            overrides: Dotted keys such as ``"train.epochs"``; None values are ignored

        Returns:
            New ExperimentConfig instance with merged settings
        """
        merged = copy.deepcopy(self)
        for dotted, value in (overrides or {}).items():
            if value is None:
                continue
            section, _, key = dotted.partition(".")
            if section not in SECTIONS or not key:
                raise ConfigError(f"unknown configuration key '{dotted}'")
            _apply(section, getattr(merged, section), {key: value})
        merged.validate()
        return merged

    def to_dict(self) -> dict[str, Any]:
        def plain(value: Any) -> Any:
            if isinstance(value, tuple | list):
                return [plain(v) for v in value]
            return value

        return {
            name: {k: plain(v) for k, v in dataclasses.asdict(getattr(self, name)).items()}
            for name in SECTIONS
        }

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form of this configuration."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def output_dir(self) -> Path:
        """``experiment.output_dir`` or ``$MARGINCLIP_OUTPUT_ROOT/<name>``."""
        if self.experiment.output_dir:
            return Path(self.experiment.output_dir)
        root = os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT)
        return Path(root) / self.experiment.name


def get_effective_config(
    overrides: dict[str, Any] | None = None,
    config_path: Path | None = None,
) -> ExperimentConfig:
    """
    Get the effective configuration by merging TOML config with CLI arguments.

    Args:
        overrides: Dotted-key CLI overrides
        config_path: Path to config file

    Returns:
        ExperimentConfig instance with final effective settings
    """
    # Load config from TOML file
    toml_config = ExperimentConfig.from_toml(config_path)

    # Merge with CLI arguments
    return toml_config.merge_with_cli(overrides)


def parse_overrides(pairs: list[str] | None) -> dict[str, Any]:
    """
    Parse ``section.key=value`` strings into dotted-key overrides.

    Values are read as TOML literals (``3``, ``0.1``, ``true``, ``[3, 3]``);
    anything that is not a valid literal is taken as a plain string.

    Raises:
        ConfigError: on a pair without ``=`` or without a dotted key
    """
    overrides: dict[str, Any] = {}
    for pair in pairs or []:
        key, sep, raw = pair.partition("=")
        key = key.strip()
        if not sep or "." not in key:
            raise ConfigError(f"override '{pair}' must look like section.key=value")
        try:
            value = tomllib.loads(f"value = {raw.strip()}")["value"]
        except tomllib.TOMLDecodeError:
            value = raw.strip()
        overrides[key] = value
    return overrides
