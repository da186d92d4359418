"""Main CLI entry point for hd-cbps."""

from pathlib import Path
from typing import Any, Dict, Literal, Optional

import typer
from loguru import logger
from pydantic import BaseModel, Field, ValidationError, model_validator
from rich.console import Console
from rich.table import Table

from hd_cbps.core.config import EstimatorConfig
from hd_cbps.core.estimate import check_compatibility, estimate_ate
from hd_cbps.core.exceptions import ConfigurationError, HDCBPSException
from hd_cbps.core.model import FamilyName, W1, W2
from hd_cbps.simulation.dgp import OutcomeKind
from hd_cbps.simulation.runner import Scenario, ScenarioSpec, generate_replication, run_scenario
from hd_cbps.utils.config import (
    estimator_config_from_dict,
    get_default_config,
    load_config,
    save_config,
)
from hd_cbps.utils.io import ingest_csv, to_json, write_dataset_csv, write_frame_csv, write_json
from hd_cbps.utils.logger import setup_logger

app = typer.Typer(
    name="hd-cbps",
    help="High-dimensional covariate balancing propensity score estimation of treatment effects"
)
console = Console()


class RunConfig(BaseModel):
    """Fully resolved invocation of the ``estimate`` or ``simulate`` command."""
    command: Literal["estimate", "simulate"]
    input: Optional[Path] = None
    output: Optional[Path] = None
    estimator: EstimatorConfig = Field(default_factory=EstimatorConfig)
    scenario: Optional[ScenarioSpec] = None
    threads: Optional[int] = Field(default=None, ge=1)
    dump_dataset: Optional[Path] = None

    @model_validator(mode="after")
    def _check_command(self) -> "RunConfig":
        if self.command == "estimate":
            if self.input is None:
                raise ValueError("estimate requires --input")
            if not self.input.is_file():
                raise ValueError(f"input file not found: {self.input}")
        if self.command == "simulate" and self.scenario is None:
            raise ValueError("simulate requires scenario settings")
        if self.output is not None and self.input is not None:
            if self.output.resolve() == self.input.resolve():
                raise ValueError("output would overwrite the input file")
        return self


def _emit_error(error: HDCBPSException) -> None:
    logger.error(str(error))
    typer.echo(to_json(error.to_dict()), nl=False)


def _emit_unexpected(error: Exception) -> None:
    logger.exception(f"Unexpected failure: {error}")
    typer.echo(to_json({"error": {"type": type(error).__name__, "message": str(error)}}), nl=False)


def _metrics_table(report) -> Table:
    table = Table(title=f"Scenario {report.scenario.value} (n={report.n}, d={report.d})", show_header=True)
    table.add_column("Estimand", style="cyan")
    table.add_column("Truth", style="white")
    table.add_column("Bias", style="green")
    table.add_column("Std Err", style="green")
    table.add_column("RMSE", style="green")
    table.add_column("Coverage", style="green")
    table.add_column("CI length", style="green")
    for row in report.metrics:
        table.add_row(
            row.estimand,
            f"{row.truth:.4f}",
            f"{row.bias:.4f}",
            f"{row.std_err:.4f}",
            f"{row.rmse:.4f}",
            f"{row.coverage:.3f}",
            f"{row.ci_length:.4f}",
        )
    return table


def check_outcome_family(spec: ScenarioSpec, estimator: EstimatorConfig) -> None:
    """
    Reject simulated outcomes the configured family cannot fit.

    Raises:
        ConfigurationError: Continuous outcomes with a count family
    """
    gaussian = estimator.family == FamilyName.GAUSSIAN.value
    if spec.outcome_kind is OutcomeKind.LINEAR and not gaussian:
        raise ConfigurationError("family", f"linear outcomes need the gaussian family, got '{estimator.family}'")
    if spec.outcome_kind is OutcomeKind.BINOMIAL and gaussian:
        logger.warning(
            "Binomial outcomes will be fitted with the gaussian family; "
            "use --family binomial:<m> for the GLM pipeline"
        )


def _run_estimate(config: RunConfig) -> None:
    data = ingest_csv(config.input)
    check_compatibility(data, config.estimator)
    result = estimate_ate(data, config.estimator)
    document = result.to_dict()
    if config.output is None:
        typer.echo(to_json(document), nl=False)
    else:
        write_json(document, config.output)
        console.print(f"[green]✓ Estimate written to {config.output}[/green]")


def _run_simulate(config: RunConfig) -> None:
    spec = config.scenario
    if config.dump_dataset is not None:
        data, _ = generate_replication(spec, 0)
        write_dataset_csv(data, config.dump_dataset)
        console.print(f"[green]✓ Replication 0 dataset written to {config.dump_dataset}[/green]")

    report = run_scenario(spec, config.estimator, config.threads)
    document = report.model_dump(mode="json")
    if config.output is None:
        console.print(_metrics_table(report))
        typer.echo(to_json(document), nl=False)
        return
    write_json(document, config.output)
    table_path = write_frame_csv(report.to_frame(), config.output.with_suffix(".csv"))
    console.print(_metrics_table(report))
    console.print(f"[green]✓ Report written to {config.output} and {table_path}[/green]")


def run(config: RunConfig) -> int:
    """
    Execute one command.

    Args:
        config: Resolved command configuration

    Returns:
        Exit status: 0 on success, 1 when the command failed; failures print
        a structured error document
    """
    try:
        if config.command == "estimate":
            _run_estimate(config)
        else:
            _run_simulate(config)
    except HDCBPSException as e:
        _emit_error(e)
        return 1
    except Exception as e:
        _emit_unexpected(e)
        return 1
    return 0


def _build_run_config(values: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(values)
    except ValidationError as exc:
        first = exc.errors()[0]
        option = ".".join(str(part) for part in first.get("loc", ())) or "command"
        raise ConfigurationError(option, first.get("msg", str(exc)))


def _penalty_overrides(lam: Optional[float], cv_folds: Optional[int], seed: Optional[int]) -> Dict[str, Any]:
    if lam is not None:
        return {"mode": "fixed", "lam": lam}
    return {"n_folds": cv_folds, "seed": seed}


def _prepare(config_path: str, log_level: Optional[str]) -> Dict[str, Any]:
    file_config = load_config(config_path)
    log_config = file_config.get("logging", {})
    setup_logger(
        level=(log_level or log_config.get("level", "INFO")).upper(),
        log_file=log_config.get("log_file"),
        rotation=log_config.get("rotation", "10 MB"),
        retention=log_config.get("retention", "1 week"),
    )
    return file_config


def _estimator_config(
    file_config: Dict[str, Any],
    family: Optional[str],
    w1: Optional[W1],
    w2: Optional[W2],
    lam: Optional[float],
    lam_outcome: Optional[float],
    cv_folds: Optional[int],
    seed: Optional[int],
    level: Optional[float],
) -> EstimatorConfig:
    overrides = {
        "family": family,
        "w1": w1.value if w1 else None,
        "w2": w2.value if w2 else None,
        "level": level,
        "propensity_penalty": _penalty_overrides(lam, cv_folds, seed),
        "outcome_penalty": _penalty_overrides(lam_outcome, cv_folds, seed),
    }
    return estimator_config_from_dict(file_config.get("estimator"), overrides)


@app.command()
def estimate(
    input: Path = typer.Option(..., "--input", help="CSV file with columns T, Y and covariates"),
    output: Optional[Path] = typer.Option(None, "--output", help="JSON output path (stdout when omitted)"),
    family: Optional[str] = typer.Option(None, "--family", help="gaussian | binomial:<m> | poisson"),
    w1: Optional[W1] = typer.Option(None, "--w1", help="Propensity weight"),
    w2: Optional[W2] = typer.Option(None, "--w2", help="Outcome weight"),
    lam: Optional[float] = typer.Option(None, "--lambda", help="Fixed propensity penalty (skips CV)"),
    lam_outcome: Optional[float] = typer.Option(None, "--lambda-outcome", help="Fixed outcome penalty (skips CV)"),
    cv_folds: Optional[int] = typer.Option(None, "--cv-folds", help="Cross-validation folds"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Fold assignment seed"),
    level: Optional[float] = typer.Option(None, "--level", help="Confidence level"),
    config_path: str = typer.Option("config/config.yaml", "--config", help="Path to configuration file"),
    log_level: Optional[str] = typer.Option(None, "--log-level", help="Log level"),
):
    """Estimate the average treatment effect on a CSV dataset."""
    file_config = _prepare(config_path, log_level)
    try:
        estimator = _estimator_config(file_config, family, w1, w2, lam, lam_outcome, cv_folds, seed, level)
        config = _build_run_config({
            "command": "estimate",
            "input": input,
            "output": output,
            "estimator": estimator,
        })
    except HDCBPSException as e:
        _emit_error(e)
        raise typer.Exit(code=2)
    raise typer.Exit(code=run(config))


@app.command()
def simulate(
    scenario: Optional[Scenario] = typer.Option(None, "--scenario", help="Misspecification scenario"),
    n: Optional[int] = typer.Option(None, "--n", help="Sample size"),
    d: Optional[int] = typer.Option(None, "--d", help="Covariate dimension"),
    rho: Optional[float] = typer.Option(None, "--rho", help="AR(1) covariate correlation"),
    reps: Optional[int] = typer.Option(None, "--reps", help="Replications"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Master seed"),
    outcome_kind: Optional[OutcomeKind] = typer.Option(None, "--outcome-kind", help="Outcome model"),
    threads: Optional[int] = typer.Option(None, "--threads", help="Worker processes"),
    output: Optional[Path] = typer.Option(None, "--output", help="JSON report path; the CSV table goes next to it"),
    family: Optional[str] = typer.Option(None, "--family", help="gaussian | binomial:<m> | poisson"),
    w1: Optional[W1] = typer.Option(None, "--w1", help="Propensity weight"),
    w2: Optional[W2] = typer.Option(None, "--w2", help="Outcome weight"),
    lam: Optional[float] = typer.Option(None, "--lambda", help="Fixed propensity penalty (skips CV)"),
    lam_outcome: Optional[float] = typer.Option(None, "--lambda-outcome", help="Fixed outcome penalty (skips CV)"),
    cv_folds: Optional[int] = typer.Option(None, "--cv-folds", help="Cross-validation folds"),
    level: Optional[float] = typer.Option(None, "--level", help="Confidence level"),
    dump_dataset: Optional[Path] = typer.Option(None, "--dump-dataset", help="Write the first replication's data as CSV"),
    config_path: str = typer.Option("config/config.yaml", "--config", help="Path to configuration file"),
    log_level: Optional[str] = typer.Option(None, "--log-level", help="Log level"),
):
    """Run a simulation scenario and report bias, RMSE and coverage."""
    file_config = _prepare(config_path, log_level)
    try:
        estimator = _estimator_config(file_config, family, w1, w2, lam, lam_outcome, cv_folds, None, level)
        scenario_values = dict(file_config.get("simulation") or {})
        overrides = {
            "scenario": scenario.value if scenario else None,
            "n": n,
            "d": d,
            "rho": rho,
            "replications": reps,
            "master_seed": seed,
            "outcome_kind": outcome_kind.value if outcome_kind else None,
        }
        scenario_values.update({key: value for key, value in overrides.items() if value is not None})
        if estimator.family.startswith("binomial:"):
            scenario_values.setdefault("trials", int(estimator.family.split(":")[1]))
        config = _build_run_config({
            "command": "simulate",
            "output": output,
            "estimator": estimator,
            "scenario": scenario_values,
            "threads": threads,
            "dump_dataset": dump_dataset,
        })
        check_outcome_family(config.scenario, config.estimator)
    except HDCBPSException as e:
        _emit_error(e)
        raise typer.Exit(code=2)
    raise typer.Exit(code=run(config))


@app.command()
def init(
    config_path: str = typer.Option(
        "config/config.yaml",
        help="Path to configuration file"
    )
):
    """Write the default configuration file."""
    console.print("\n[bold blue]hd-cbps - Initialization[/bold blue]")

    if Path(config_path).exists():
        overwrite = typer.confirm(
            f"Configuration file {config_path} already exists. Overwrite?"
        )
        if not overwrite:
            console.print("[yellow]Initialization cancelled[/yellow]")
            return

    if save_config(get_default_config(), config_path):
        console.print(f"[green]✓ Configuration saved to {config_path}[/green]")
        console.print("\n[bold]Next steps:[/bold]")
        console.print("1. Estimate on your data: hd-cbps estimate --input data.csv")
        console.print("2. Run a simulation: hd-cbps simulate --scenario both-correct --d 20 --reps 20")
    else:
        console.print("[red]✗ Failed to save configuration[/red]")
        raise typer.Exit(code=1)


@app.command()
def info(
    config_path: str = typer.Option(
        "config/config.yaml",
        help="Path to configuration file"
    )
):
    """Show the effective configuration."""
    console.print("\n[bold blue]hd-cbps - Configuration[/bold blue]\n")

    config = load_config(config_path)
    try:
        estimator = estimator_config_from_dict(config.get("estimator"))
    except ConfigurationError as e:
        _emit_error(e)
        raise typer.Exit(code=2)

    table = Table(title="Configuration", show_header=True)
    table.add_column("Setting", style="cyan")
    table.add_column("Value", style="green")

    table.add_row("Family", estimator.family)
    table.add_row("Pipeline", estimator.resolved_pipeline.value)
    table.add_row("Propensity weight (w1)", estimator.w1.value)
    table.add_row("Outcome weight (w2)", estimator.w2.value)
    table.add_row("Propensity penalty", estimator.propensity_penalty.mode)
    table.add_row("Outcome penalty", estimator.outcome_penalty.mode)
    table.add_row("CV folds", str(estimator.propensity_penalty.n_folds))
    table.add_row("Confidence level", str(estimator.level))

    sim_config = config.get("simulation", {})
    table.add_row("Scenario", str(sim_config.get("scenario", "N/A")))
    table.add_row("Replications", str(sim_config.get("replications", "N/A")))

    log_config = config.get("logging", {})
    table.add_row("Log Level", str(log_config.get("level", "N/A")))
    table.add_row("Log File", str(log_config.get("log_file", "N/A")))

    console.print(table)
    console.print()


@app.command()
def version():
    """Show version information."""
    from hd_cbps import __version__
    console.print(f"\n[bold blue]hd-cbps[/bold blue] version [green]{__version__}[/green]\n")


def main():
    """Main entry point."""
    app()


if __name__ == "__main__":
    main()
