"""
End-to-end experiment pipeline: generate, poison, train, mitigate, calibrate
and evaluate every repetition, persisting each artifact as soon as it exists.
"""

import hashlib
import json
import logging
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

from .. import __version__
from ..config import ExperimentConfig
from ..config import settings as names
from ..data import (
    AttackConfig,
    Dataset,
    duplicate_with_triggers,
    generate_synthetic,
    make_trigger_testset,
    poison_training_set,
)
from ..detection import MmdfPipeline, NullModel, fit_null, roc_curve, statistic
from ..errors import ArtifactFormatError, ArtifactMissingError, MarginClipError, StageError
from ..mitigation import MmacConfig, run_mmac
from ..nn import Network, standardize_activation_scale, victim_network
from ..output import (
    write_adaptive_history,
    write_history,
    write_reports,
    write_roc,
    write_summary,
    write_trajectory,
)
from ..serialization import save_bounds, save_checkpoint, save_dataset
from ..training import AdaptiveConfig, TrainConfig, adaptive_attack, train
from .metrics import EvalReport, aggregate, evaluate

logger = logging.getLogger(__name__)

STAGES = ("generate", "poison", "train", "adaptive", "mitigate", "calibrate", "evaluate")

StageCallback = Callable[[int, str], None]


@dataclass
class RepetitionSeeds:
    """Every seed a repetition uses, as recorded in the manifest."""

    repetition: int
    data: int
    attack: int
    model: int
    train: int
    mmac: int
    split: int

    @classmethod
    def derive(cls, cfg: ExperimentConfig, repetition: int) -> "RepetitionSeeds":
        offset = cfg.experiment.seed + repetition
        return cls(
            repetition=repetition,
            data=cfg.data.seed + offset,
            attack=cfg.attack.seed + offset,
            model=cfg.model.seed + offset,
            train=cfg.train.seed + offset,
            mmac=cfg.mmac.seed + offset,
            split=cfg.data.seed + offset,
        )


@dataclass
class RepetitionResult:
    directory: Path
    seeds: RepetitionSeeds
    reports: list[EvalReport] = field(default_factory=list)


@dataclass
class ExperimentData:
    train: Dataset
    clean: Dataset
    test: Dataset
    attack: AttackConfig | None = None
    poisoned: Dataset | None = None
    triggered: Dataset | None = None


@contextmanager
def stage(name: str, repetition: int, on_stage: StageCallback | None = None) -> Iterator[None]:
    """Run one stage, wrapping any failure in a StageError naming it."""
    logger.info("repetition %d: %s", repetition, name)
    if on_stage is not None:
        on_stage(repetition, name)
    try:
        yield
    except StageError:
        raise
    except (MarginClipError, ValueError, OSError) as exc:
        logger.error("repetition %d: stage %s failed: %s", repetition, name, exc)
        raise StageError(name, exc) from exc


def generate_data(cfg: ExperimentConfig, seeds: RepetitionSeeds) -> ExperimentData:
    """Synthetic train/test splits; the defender's clean set is held out of training."""
    d = cfg.data
    geometry = (d.height, d.width, d.channels)
    full_train = generate_synthetic(
        d.classes, d.train_per_class, *geometry, d.noise_sigma, seeds.data, 0, d.contrast
    )
    test = generate_synthetic(
        d.classes, d.test_per_class, *geometry, d.noise_sigma, seeds.data, 1, d.contrast
    )
    clean, train_part = full_train.split(d.clean_fraction, seeds.split)
    return ExperimentData(train=train_part, clean=clean, test=test)


def poison_data(cfg: ExperimentConfig, seeds: RepetitionSeeds, data: ExperimentData) -> None:
    attack = cfg.attack.build(cfg.data.image_shape, seeds.attack)
    data.attack = attack
    if attack is None:
        return
    data.poisoned, _ = poison_training_set(data.train, attack)
    data.triggered = make_trigger_testset(data.test, attack)


def build_victim(cfg: ExperimentConfig, seed: int) -> Network:
    return victim_network(
        cfg.data.image_shape,
        cfg.data.classes,
        cfg.model.activation,  # type: ignore[arg-type]
        cfg.model.negative_slope,
        seed,
    )


def finalize_victim(cfg: ExperimentConfig, model: Network, clean: Dataset) -> Network:
    """Trained victim with activations standardized on clean data when configured."""
    if not cfg.model.standardize:
        return model
    logger.debug("standardizing activation scales on %d clean samples", len(clean))
    return standardize_activation_scale(model, clean.images)


def mmac_config(cfg: ExperimentConfig, seed: int) -> MmacConfig:
    return replace(cfg.mmac, seed=seed)


def adaptive_config(cfg: ExperimentConfig, seeds: RepetitionSeeds, clean: Dataset) -> AdaptiveConfig:
    """Adaptive attack settings; the attacker estimates bounds on the defender's clean set."""
    return AdaptiveConfig(
        beta=cfg.adaptive.beta,
        outer_rounds=cfg.adaptive.outer_rounds,
        finetune_steps_per_round=cfg.adaptive.finetune_steps_per_round,
        mmac=mmac_config(cfg, seeds.mmac),
        finetune=TrainConfig(
            batch_size=cfg.train.batch_size,
            learning_rate=cfg.adaptive.learning_rate,
            momentum=cfg.train.momentum,
            weight_decay=cfg.train.weight_decay,
            seed=seeds.train,
            lr_milestones=(),
        ),
        clean_subset=clean,
    )


def split_clean(cfg: ExperimentConfig, clean: Dataset, seed: int) -> tuple[Dataset, Dataset]:
    """(mitigation set, calibration set); both are the whole clean set without holdout."""
    if cfg.detection.holdout_fraction <= 0:
        return clean, clean
    calibration, mitigation = clean.split(cfg.detection.holdout_fraction, seed)
    return mitigation, calibration


def write_null(path: Path, null: NullModel) -> Path:
    payload = {"mu": null.mu, "sigma": null.sigma, "sample_count": null.sample_count}
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def read_null(path: Path) -> NullModel:
    if not path.exists():
        raise ArtifactMissingError(f"null model not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
        return NullModel(float(payload["mu"]), float(payload["sigma"]), int(payload["sample_count"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactFormatError(f"invalid null model file {path}: {exc}") from exc


def run_repetition(
    cfg: ExperimentConfig,
    repetition: int,
    directory: Path,
    on_stage: StageCallback | None = None,
) -> RepetitionResult:
    seeds = RepetitionSeeds.derive(cfg, repetition)
    result = RepetitionResult(directory=directory, seeds=seeds)
    config_hash = cfg.config_hash()
    directory.mkdir(parents=True, exist_ok=True)

    with stage("generate", repetition, on_stage):
        data = generate_data(cfg, seeds)
        save_dataset(directory / names.CLEAN_TRAIN_FILE, data.train)
        save_dataset(directory / names.CLEAN_SET_FILE, data.clean)
        save_dataset(directory / names.TEST_FILE, data.test)

    with stage("poison", repetition, on_stage):
        poison_data(cfg, seeds, data)
        if data.poisoned is not None and data.triggered is not None:
            save_dataset(directory / names.POISONED_TRAIN_FILE, data.poisoned)
            save_dataset(directory / names.TRIGGERED_TEST_FILE, data.triggered)

    with stage("train", repetition, on_stage):
        train_cfg = replace(cfg.train, seed=seeds.train)
        training_set = data.poisoned if data.poisoned is not None else data.train
        model, history = train(
            build_victim(cfg, seeds.model), training_set, train_cfg, data.test, data.triggered
        )
        model = finalize_victim(cfg, model, data.train)
        write_history(directory / names.HISTORY_FILE, history.epochs, config_hash)
        save_checkpoint(directory / names.MODEL_FILE, model)

    if cfg.adaptive.enabled and data.attack is not None:
        with stage("adaptive", repetition, on_stage):
            adaptive_set, backdoor = duplicate_with_triggers(data.train, data.attack)
            adaptive_cfg = adaptive_config(cfg, seeds, data.clean)
            model, adaptive_history = adaptive_attack(model, adaptive_set, backdoor, adaptive_cfg)
            write_adaptive_history(directory / names.ADAPTIVE_FILE, adaptive_history, config_hash)
            save_checkpoint(directory / names.MODEL_FILE, model)

    mitigation_set, calibration_set = split_clean(cfg, data.clean, seeds.split)
    with stage("mitigate", repetition, on_stage):
        mmac = run_mmac(model, mitigation_set, mmac_config(cfg, seeds.mmac))
        save_bounds(directory / names.BOUNDS_FILE, mmac.z_star)
        save_checkpoint(directory / names.MODEL_FILE, model, mmac.z_star)
        write_trajectory(directory / names.TRAJECTORY_FILE, mmac.records, config_hash)

    with stage("calibrate", repetition, on_stage):
        null = fit_null(model, mmac.z_star, calibration_set)
        write_null(directory / names.NULL_FILE, null)

    with stage("evaluate", repetition, on_stage):
        auc = None
        if data.triggered is not None:
            curve = roc_curve(
                statistic(model, mmac.z_star, data.test.images),
                statistic(model, mmac.z_star, data.triggered.images),
            )
            write_roc(directory / names.ROC_FILE, curve, config_hash)
            auc = curve.auc
        detector = MmdfPipeline(
            model, mmac.z_star, null, cfg.detection.theta, cfg.detection.mode  # type: ignore[arg-type]
        )
        other_mode = "reject" if detector.mode == "correct" else "correct"
        result.reports = [
            evaluate(model, data.test, data.triggered, seed=seeds.repetition),
            evaluate(model, data.test, data.triggered, z_star=mmac.z_star, seed=seeds.repetition),
            evaluate(model, data.test, data.triggered, pipeline=detector, seed=seeds.repetition, auc=auc),
            evaluate(
                model,
                data.test,
                data.triggered,
                pipeline=detector.with_mode(other_mode),  # type: ignore[arg-type]
                seed=seeds.repetition,
                auc=auc,
            ),
        ]
        write_reports(directory / names.REPORT_FILE, result.reports, config_hash)
    return result


def file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(
    out_dir: Path, cfg: ExperimentConfig, results: list[RepetitionResult]
) -> Path:
    """Record the configuration, its hash, every seed and every CSV digest."""
    artifacts = sorted(
        str(p.relative_to(out_dir)) for p in out_dir.rglob("*.csv") if p.is_file()
    )
    manifest = {
        "version": __version__,
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict(),
        "repetitions": [
            {"directory": r.directory.name, "seeds": vars(r.seeds)} for r in results
        ],
        "artifacts": {name: file_digest(out_dir / name) for name in artifacts},
    }
    path = out_dir / names.MANIFEST_FILE
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def load_manifest_config(path: Path) -> ExperimentConfig:
    """The ExperimentConfig recorded in a manifest, checked against its hash."""
    if not path.exists():
        raise ArtifactMissingError(f"manifest not found: {path}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
        cfg = ExperimentConfig.from_dict(manifest["config"])
        recorded = manifest["config_hash"]
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ArtifactFormatError(f"invalid manifest {path}: {exc}") from exc
    if cfg.config_hash() != recorded:
        raise ArtifactFormatError(f"manifest {path} config does not match its hash")
    return cfg


def run_pipeline(
    cfg: ExperimentConfig,
    out_dir: Path | None = None,
    on_stage: StageCallback | None = None,
) -> Path:
    """
    Run every repetition of an experiment and write its reports.

    Args:
        cfg: Validated experiment configuration
        out_dir: Artifact directory (defaults to ``cfg.output_dir()``)
        on_stage: Optional callback receiving (repetition, stage name)

    Returns:
        The artifact directory

    Raises:
        StageError: naming the failed stage; artifacts written so far remain
    """
    cfg.validate()
    out_dir = out_dir or cfg.output_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    config_hash = cfg.config_hash()
    logger.info("experiment %s (config %s) -> %s", cfg.experiment.name, config_hash[:12], out_dir)

    results = []
    for repetition in range(cfg.experiment.repetitions):
        results.append(
            run_repetition(cfg, repetition, out_dir / f"rep_{repetition:02d}", on_stage)
        )

    reports = [report for result in results for report in result.reports]
    write_reports(out_dir / names.REPORT_FILE, reports, config_hash)
    write_summary(out_dir / names.SUMMARY_FILE, aggregate(reports), config_hash)
    write_manifest(out_dir, cfg, results)
    return out_dir
