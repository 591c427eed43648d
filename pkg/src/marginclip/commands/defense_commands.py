"""
Mitigation, detection and evaluation command implementation
"""

import logging
from collections.abc import Callable
from pathlib import Path

from ..config import ExperimentConfig
from ..config import settings as names
from ..data import Dataset
from ..detection import DetectionBatch, MmdfPipeline, RocCurve, fit_null, roc_curve, statistic
from ..errors import ArtifactMissingError, ConfigError
from ..harness import EvalReport, RepetitionSeeds, evaluate, mmac_config, split_clean, write_null
from ..mitigation import IterationRecord, MmacResult, run_mmac
from ..nn import ClipBounds, Network, max_abs_activation_profile
from ..output import (
    plot_roc,
    write_detections,
    write_profile,
    write_reports,
    write_roc,
    write_trajectory,
)
from ..serialization import (
    load_bounds,
    load_checkpoint,
    load_dataset,
    save_bounds,
    save_checkpoint,
)
from .artifacts import artifact_path, load_optional_dataset

logger = logging.getLogger(__name__)


def _load_model(run_dir: Path, checkpoint: Path | None) -> Network:
    model, _ = load_checkpoint(artifact_path(run_dir, checkpoint, names.MODEL_FILE))
    return model


def _load_model_and_bounds(
    run_dir: Path, checkpoint: Path | None, bounds: Path | None
) -> tuple[Network, ClipBounds]:
    model = _load_model(run_dir, checkpoint)
    z_star = load_bounds(artifact_path(run_dir, bounds, names.BOUNDS_FILE))
    z_star.validate_for(model)
    return model, z_star


def _require_triggered(run_dir: Path) -> Dataset:
    triggered = load_optional_dataset(run_dir / names.TRIGGERED_TEST_FILE)
    if triggered is None:
        raise ArtifactMissingError(
            f"no triggered test set in {run_dir}; configure an attack and run gen-data"
        )
    return triggered


def _detector(
    cfg: ExperimentConfig,
    model: Network,
    z_star: ClipBounds,
    clean_set: Dataset,
    seeds: RepetitionSeeds,
) -> MmdfPipeline:
    _, calibration = split_clean(cfg, clean_set, seeds.split)
    null = fit_null(model, z_star, calibration)
    return MmdfPipeline(model, z_star, null, cfg.detection.theta, cfg.detection.mode)  # type: ignore[arg-type]


def mitigate_command(
    cfg: ExperimentConfig,
    run_dir: Path,
    checkpoint: Path | None = None,
    clean_set: Path | None = None,
    repetition: int = 0,
    on_iteration: Callable[[IterationRecord], None] | None = None,
) -> tuple[MmacResult, Path]:
    """
    Learn clip bounds on the defender's clean set.

    Writes the standalone bounds file, re-saves the checkpoint with the bounds
    appended and records the optimization trajectory.

    Returns:
        (MMAC result, bounds file path)
    """
    seeds = RepetitionSeeds.derive(cfg, repetition)
    checkpoint_path = artifact_path(run_dir, checkpoint, names.MODEL_FILE)
    model, _ = load_checkpoint(checkpoint_path)
    clean = load_dataset(artifact_path(run_dir, clean_set, names.CLEAN_SET_FILE))
    mitigation, _ = split_clean(cfg, clean, seeds.split)

    result = run_mmac(model, mitigation, mmac_config(cfg, seeds.mmac), on_iteration)
    bounds_path = save_bounds(run_dir / names.BOUNDS_FILE, result.z_star)
    save_checkpoint(checkpoint_path, model, result.z_star)
    write_trajectory(run_dir / names.TRAJECTORY_FILE, result.records, cfg.config_hash())
    return result, bounds_path


def detect_command(
    cfg: ExperimentConfig,
    run_dir: Path,
    checkpoint: Path | None = None,
    bounds: Path | None = None,
    input_path: Path | None = None,
    clean_set: Path | None = None,
    output: Path | None = None,
    repetition: int = 0,
) -> tuple[DetectionBatch, Path]:
    """
    Calibrate the null on the clean set and decide every input sample.

    The input defaults to the triggered test set, or the clean test set when
    no attack was generated.

    Returns:
        (detection batch, detections CSV path)
    """
    seeds = RepetitionSeeds.derive(cfg, repetition)
    model, z_star = _load_model_and_bounds(run_dir, checkpoint, bounds)
    clean = load_dataset(artifact_path(run_dir, clean_set, names.CLEAN_SET_FILE))
    detector = _detector(cfg, model, z_star, clean, seeds)
    write_null(run_dir / names.NULL_FILE, detector.null)

    if input_path is None:
        input_path = run_dir / names.TRIGGERED_TEST_FILE
        if not input_path.exists():
            input_path = run_dir / names.TEST_FILE
    inputs = load_dataset(input_path)
    batch = detector.decide_batch(inputs.images)
    path = write_detections(
        artifact_path(run_dir, output, names.DETECTIONS_FILE), batch, cfg.config_hash()
    )
    logger.info("flagged %d of %d inputs from %s", int(batch.flagged.sum()), len(batch), input_path)
    return batch, path


def roc_command(
    cfg: ExperimentConfig,
    run_dir: Path,
    checkpoint: Path | None = None,
    bounds: Path | None = None,
    plot: bool = False,
) -> tuple[RocCurve, list[Path]]:
    """
    ROC of the margin-change statistic: clean test set versus triggered test set.

    Returns:
        (curve, files written)
    """
    model, z_star = _load_model_and_bounds(run_dir, checkpoint, bounds)
    test = load_dataset(run_dir / names.TEST_FILE)
    triggered = _require_triggered(run_dir)
    curve = roc_curve(statistic(model, z_star, test.images), statistic(model, z_star, triggered.images))
    written = [write_roc(run_dir / names.ROC_FILE, curve, cfg.config_hash())]
    if plot:
        written.append(plot_roc(run_dir / names.ROC_PLOT_FILE, curve))
    return curve, written


def evaluate_command(
    cfg: ExperimentConfig,
    run_dir: Path,
    defense: str = "all",
    checkpoint: Path | None = None,
    bounds: Path | None = None,
    repetition: int = 0,
) -> tuple[list[EvalReport], Path]:
    """
    Evaluate one defense, or all three with ``defense="all"``.

    ``mmdf`` reports both correction modes, the configured one first.

    ``mmac`` and ``mmdf`` need the bounds file; a missing one raises
    ArtifactMissingError.

    Returns:
        (reports, report CSV path)
    """
    if defense not in (*names.DEFENSES, "all"):
        raise ConfigError(f"defense must be one of {', '.join(names.DEFENSES)} or all")
    seeds = RepetitionSeeds.derive(cfg, repetition)
    wanted = names.DEFENSES if defense == "all" else (defense,)
    test = load_dataset(run_dir / names.TEST_FILE)
    triggered = load_optional_dataset(run_dir / names.TRIGGERED_TEST_FILE)

    reports = []
    if "none" in wanted:
        reports.append(evaluate(_load_model(run_dir, checkpoint), test, triggered, seed=seeds.repetition))
    if "mmac" in wanted or "mmdf" in wanted:
        model, z_star = _load_model_and_bounds(run_dir, checkpoint, bounds)
        if "mmac" in wanted:
            reports.append(evaluate(model, test, triggered, z_star=z_star, seed=seeds.repetition))
        if "mmdf" in wanted:
            clean = load_dataset(run_dir / names.CLEAN_SET_FILE)
            detector = _detector(cfg, model, z_star, clean, seeds)
            auc = None
            if triggered is not None:
                auc = roc_curve(
                    statistic(model, z_star, test.images),
                    statistic(model, z_star, triggered.images),
                ).auc
            for mode in (detector.mode, "reject" if detector.mode == "correct" else "correct"):
                reports.append(
                    evaluate(
                        model,
                        test,
                        triggered,
                        pipeline=detector.with_mode(mode),  # type: ignore[arg-type]
                        seed=seeds.repetition,
                        auc=auc,
                    )
                )

    path = write_reports(run_dir / names.REPORT_FILE, reports, cfg.config_hash())
    return reports, path


def profile_command(
    cfg: ExperimentConfig,
    run_dir: Path,
    checkpoint: Path | None = None,
    bounds: Path | None = None,
) -> Path:
    """
    Per-layer, per-unit activation extremes on clean and triggered test data.

    With a bounds file the bounded network is profiled instead.
    """
    model = _load_model(run_dir, checkpoint)
    z_star = None
    if bounds is not None:
        z_star = load_bounds(bounds)
        z_star.validate_for(model)
    splits = {"clean": load_dataset(run_dir / names.TEST_FILE)}
    triggered = load_optional_dataset(run_dir / names.TRIGGERED_TEST_FILE)
    if triggered is not None:
        splits["triggered"] = triggered

    profiles = {}
    for split, dataset in splits.items():
        profile = max_abs_activation_profile(model, dataset.images, z_star)
        profiles[split] = (profile.minima, profile.maxima)
    return write_profile(run_dir / names.PROFILE_FILE, profiles, cfg.config_hash())
