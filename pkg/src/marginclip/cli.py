import logging
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any

import typer
from rich.console import Console
from rich.logging import RichHandler

from . import __version__
from .commands import (
    adaptive_attack_command,
    detect_command,
    evaluate_command,
    gen_data_command,
    mitigate_command,
    pipeline_command,
    profile_command,
    roc_command,
    train_command,
)
from .commands.progress import track
from .config import ExperimentConfig, get_effective_config, parse_overrides
from .errors import ConfigError, MarginClipError
from .formatters import ReportFormatter

console = Console()
err_console = Console(stderr=True)
formatter = ReportFormatter()

EXIT_CONFIG_ERROR = 2
EXIT_STAGE_FAILURE = 3

app = typer.Typer(
    name="marginclip",
    help="Simulate backdoor attacks on small image classifiers and defend them "
    "with maximum-margin activation clipping and margin-change detection",
    add_completion=False,
    context_settings={"help_option_names": ["-h", "--help"]},
)

ConfigOption = typer.Option(
    None, "-c", "--config", help="TOML configuration file (default: ./marginclip.toml)"
)
SetOption = typer.Option(
    None, "--set", help="Override a configuration value, e.g. --set train.epochs=5"
)
RunDirOption = typer.Option(
    None, "--run-dir", help="Artifact directory (default: <output root>/<name>/rep_NN)"
)
RepOption = typer.Option(0, "--rep", min=0, help="Repetition whose seeds are used")
CheckpointOption = typer.Option(None, "--checkpoint", help="Checkpoint file")
BoundsOption = typer.Option(None, "--bounds", help="Bounds file or checkpoint with bounds")


def _version_callback(value: bool) -> None:
    if value:
        console.print(f"marginclip version {__version__}", style="bold green")
        raise typer.Exit()


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=err_console, show_path=False)],
        force=True,
    )


@contextmanager
def _exit_on_error() -> Iterator[None]:
    """Print errors in the CLI style and map them to exit codes."""
    try:
        yield
    except ConfigError as e:
        console.print(f"❌ Error: {e}", style="bold red")
        raise typer.Exit(EXIT_CONFIG_ERROR) from e
    except MarginClipError as e:
        console.print(f"❌ Error: {e}", style="bold red")
        raise typer.Exit(EXIT_STAGE_FAILURE) from e


def _load_config(
    config: Path | None, overrides: list[str] | None, **flags: Any
) -> ExperimentConfig:
    """File values, then --set overrides, then dedicated flags."""
    merged = parse_overrides(overrides)
    merged.update(
        {key.replace("__", "."): value for key, value in flags.items() if value is not None}
    )
    return get_effective_config(merged, config)


def _run_dir(cfg: ExperimentConfig, run_dir: Path | None, rep: int) -> Path:
    return run_dir if run_dir is not None else cfg.output_dir() / f"rep_{rep:02d}"


@app.callback()
def main(
    verbose: bool = typer.Option(False, "--verbose", help="Show debug logging"),
    version: bool = typer.Option(
        False,
        "-v",
        "--version",
        help="Show version and exit",
        callback=_version_callback,
        is_eager=True,
    ),
):
    _configure_logging(verbose)


@app.command("gen-data")
def gen_data(
    config: Path | None = ConfigOption,
    overrides: list[str] | None = SetOption,
    run_dir: Path | None = RunDirOption,
    rep: int = RepOption,
    attack: str | None = typer.Option(None, "--attack", help="none, all2one, one2one or all2all"),
    trigger: str | None = typer.Option(None, "--trigger", help="patch, chessboard or blend"),
    target: int | None = typer.Option(None, "--target", help="Target class"),
    source: int | None = typer.Option(None, "--source", help="Source class (one2one)"),
    poison_rate: float | None = typer.Option(None, "--poison-rate", help="Poisoned share"),
):
    """Generate the synthetic dataset splits and poison the training split."""
    with _exit_on_error():
        cfg = _load_config(
            config,
            overrides,
            attack__mode=attack,
            attack__trigger=trigger,
            attack__target=target,
            attack__source=source,
            attack__poison_rate=poison_rate,
        )
        directory = _run_dir(cfg, run_dir, rep)
        written = gen_data_command(cfg, directory, rep)
    console.print(f"✅ Wrote {len(written)} dataset files to: {directory}", style="bold green")


@app.command()
def train(
    config: Path | None = ConfigOption,
    overrides: list[str] | None = SetOption,
    run_dir: Path | None = RunDirOption,
    rep: int = RepOption,
    data: Path | None = typer.Option(None, "--data", help="Training dataset file"),
    checkpoint: Path | None = typer.Option(None, "-o", "--output", help="Checkpoint to write"),
    epochs: int | None = typer.Option(None, "--epochs", help="Training epochs"),
    learning_rate: float | None = typer.Option(None, "--lr", help="Initial learning rate"),
):
    """Train a victim network on the (possibly poisoned) training split."""
    with _exit_on_error():
        cfg = _load_config(
            config, overrides, train__epochs=epochs, train__learning_rate=learning_rate
        )
        directory = _run_dir(cfg, run_dir, rep)
        with track(console, "Training", cfg.train.epochs) as advance:
            history, path = train_command(cfg, directory, data, checkpoint, rep, on_epoch=advance)
    console.print(formatter.training_table(history))
    console.print(f"✅ Checkpoint saved to: {path}", style="bold green")


@app.command("adaptive-attack")
def adaptive_attack(
    config: Path | None = ConfigOption,
    overrides: list[str] | None = SetOption,
    run_dir: Path | None = RunDirOption,
    rep: int = RepOption,
    checkpoint: Path | None = CheckpointOption,
    output: Path | None = typer.Option(None, "-o", "--output", help="Checkpoint to write"),
    beta: float | None = typer.Option(None, "--beta", help="Penalty weight"),
):
    """Fine-tune a backdoored checkpoint to evade activation clipping."""
    with _exit_on_error():
        cfg = _load_config(config, overrides, adaptive__beta=beta)
        directory = _run_dir(cfg, run_dir, rep)
        with console.status("Running adaptive attack..."):
            history, path = adaptive_attack_command(cfg, directory, checkpoint, output, rep)
    for r in history.rounds:
        console.print(
            f"round {r.round}: loss {r.mean_loss:.4f}, penalty {r.mean_penalty:.4f}"
        )
    console.print(f"✅ Adaptive checkpoint saved to: {path}", style="bold green")


@app.command()
def mitigate(
    config: Path | None = ConfigOption,
    overrides: list[str] | None = SetOption,
    run_dir: Path | None = RunDirOption,
    rep: int = RepOption,
    checkpoint: Path | None = CheckpointOption,
    clean_set: Path | None = typer.Option(None, "--clean-set", help="Defender's clean set"),
    t_max: int | None = typer.Option(None, "--t-max", help="Bound-learning iterations"),
):
    """Learn activation clip bounds that suppress maximum margins."""
    with _exit_on_error():
        cfg = _load_config(config, overrides, mmac__t_max=t_max)
        directory = _run_dir(cfg, run_dir, rep)
        with track(console, "Learning bounds", cfg.mmac.t_max) as advance:
            result, path = mitigate_command(
                cfg, directory, checkpoint, clean_set, rep, on_iteration=advance
            )
    console.print(formatter.mmac_table(result))
    if not result.accuracy_constraint_met:
        console.print("⚠️  Clean accuracy stayed below the target", style="bold yellow")
    console.print(f"✅ Bounds saved to: {path}", style="bold green")


@app.command()
def detect(
    config: Path | None = ConfigOption,
    overrides: list[str] | None = SetOption,
    run_dir: Path | None = RunDirOption,
    rep: int = RepOption,
    checkpoint: Path | None = CheckpointOption,
    bounds: Path | None = BoundsOption,
    input_path: Path | None = typer.Option(None, "--input", help="Dataset file to screen"),
    clean_set: Path | None = typer.Option(None, "--clean-set", help="Calibration clean set"),
    output: Path | None = typer.Option(None, "-o", "--output", help="Detections CSV"),
    theta: float | None = typer.Option(None, "--theta", help="Detection significance"),
    mode: str | None = typer.Option(None, "--mode", help="correct or reject"),
):
    """Flag and correct (or reject) triggered inputs."""
    with _exit_on_error():
        cfg = _load_config(config, overrides, detection__theta=theta, detection__mode=mode)
        directory = _run_dir(cfg, run_dir, rep)
        batch, path = detect_command(
            cfg, directory, checkpoint, bounds, input_path, clean_set, output, rep
        )
    console.print(
        f"✅ Flagged {int(batch.flagged.sum())} of {len(batch)} inputs; "
        f"detections saved to: {path}",
        style="bold green",
    )


@app.command()
def evaluate(
    config: Path | None = ConfigOption,
    overrides: list[str] | None = SetOption,
    run_dir: Path | None = RunDirOption,
    rep: int = RepOption,
    checkpoint: Path | None = CheckpointOption,
    bounds: Path | None = BoundsOption,
    defense: str = typer.Option("all", "--defense", help="none, mmac, mmdf or all"),
):
    """Report ACC, ASR and PACC for each defense."""
    with _exit_on_error():
        cfg = _load_config(config, overrides)
        directory = _run_dir(cfg, run_dir, rep)
        reports, path = evaluate_command(cfg, directory, defense, checkpoint, bounds, rep)
    console.print(formatter.reports_table(reports))
    console.print(f"✅ Report saved to: {path}", style="bold green")


@app.command()
def roc(
    config: Path | None = ConfigOption,
    overrides: list[str] | None = SetOption,
    run_dir: Path | None = RunDirOption,
    rep: int = RepOption,
    checkpoint: Path | None = CheckpointOption,
    bounds: Path | None = BoundsOption,
    plot: bool = typer.Option(False, "--plot", help="Also write an SVG plot"),
):
    """ROC curve of the detection statistic on clean versus triggered test data."""
    with _exit_on_error():
        cfg = _load_config(config, overrides)
        directory = _run_dir(cfg, run_dir, rep)
        curve, written = roc_command(cfg, directory, checkpoint, bounds, plot)
    console.print(formatter.roc_caption(curve))
    for path in written:
        console.print(f"✅ Saved: {path}", style="bold green")


@app.command()
def profile(
    config: Path | None = ConfigOption,
    overrides: list[str] | None = SetOption,
    run_dir: Path | None = RunDirOption,
    rep: int = RepOption,
    checkpoint: Path | None = CheckpointOption,
    bounds: Path | None = typer.Option(None, "--bounds", help="Profile the bounded network"),
):
    """Per-unit activation extremes on clean and triggered test data."""
    with _exit_on_error():
        cfg = _load_config(config, overrides)
        directory = _run_dir(cfg, run_dir, rep)
        path = profile_command(cfg, directory, checkpoint, bounds)
    console.print(f"✅ Activation profile saved to: {path}", style="bold green")


@app.command()
def pipeline(
    config: Path | None = ConfigOption,
    overrides: list[str] | None = SetOption,
    output: Path | None = typer.Option(None, "-o", "--output", help="Artifact directory"),
    manifest: Path | None = typer.Option(
        None, "--manifest", help="Rerun the experiment recorded in this manifest"
    ),
    repetitions: int | None = typer.Option(None, "--repetitions", help="Repetitions"),
    name: str | None = typer.Option(None, "--name", help="Experiment name"),
):
    """Run generate, poison, train, mitigate, calibrate and evaluate end to end."""
    with _exit_on_error():
        cfg = None
        if manifest is None:
            cfg = _load_config(
                config,
                overrides,
                experiment__repetitions=repetitions,
                experiment__name=name,
            )
        with console.status("Running pipeline...") as status:
            directory, summaries = pipeline_command(
                cfg,
                output,
                manifest,
                on_stage=lambda rep, stage: status.update(f"repetition {rep}: {stage}"),
            )
    console.print(formatter.summary_table(summaries))
    console.print(f"✅ Artifacts saved to: {directory}", style="bold green")


if __name__ == "__main__":
    app()
