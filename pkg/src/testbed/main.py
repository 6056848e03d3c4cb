"""
Command-line entry point.

    safe-rejuvenation certify   SCENARIO [--out DIR]
    safe-rejuvenation simulate  SCENARIO [--attack NAME|none] [--out DIR]
    safe-rejuvenation validate  SCENARIO --runs N --seed S [--workers W] [--out DIR]
    safe-rejuvenation tune      SCENARIO --strategy {epsilon|limits} [--out DIR]
    safe-rejuvenation plot-data SCENARIO [--out DIR]

Exit codes: 0 success, 2 infeasible certificate, 3 safety violation,
4 configuration error, 1 any other failure.

Author: Dr. Sofia Lindqvist
Date: 2024-03-02
"""

import functools
import sys
from pathlib import Path
from typing import Callable

import click
import structlog

from ..certification.config import configure_logging, settings
from ..certification.errors import ConfigError, RejuvenationError, TuningExhausted
from ..certification.tuning import TuningStrategy
from .attacks import AttackKind
from .export import write_plot_data, write_report, write_trace, write_tuning_log
from .pipeline import CertificateReport, run_pipeline
from .quadrotor import STATE_LABELS
from .scenario import load_scenario, resolve
from .simulator import monte_carlo_validate, simulate

logger = structlog.get_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INFEASIBLE = 2
EXIT_VIOLATION = 3
EXIT_CONFIG = 4

STRATEGIES = {
    "epsilon": TuningStrategy.SHRINK_EPSILON,
    "limits": TuningStrategy.TIGHTEN_LIMITS,
}

scenario_argument = click.argument(
    "scenario", type=click.Path(exists=True, dir_okay=False, path_type=Path)
)
out_option = click.option(
    "--out", "out_dir", type=click.Path(file_okay=False, path_type=Path),
    default=Path("out"), show_default=True, help="Artifact directory",
)


def guarded(command: Callable) -> Callable:
    """Map module errors onto the exit-code contract."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            code = command(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except TuningExhausted as exc:
            click.echo(f"infeasible: {exc}", err=True)
            sys.exit(EXIT_INFEASIBLE)
        except RejuvenationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_FAILURE)
        except Exception as exc:
            logger.error("fatal_error", error=str(exc), exc_info=True)
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_FAILURE)
        sys.exit(code or EXIT_OK)

    return wrapper


def _certify(scenario_path: Path, out_dir: Path, strategy=None) -> CertificateReport:
    scenario = load_scenario(scenario_path)
    report = run_pipeline(scenario, strategy=strategy)
    write_report(report.to_dict(), out_dir / "certificate.json")
    if report.tuning_log:
        write_tuning_log(report.tuning_log, out_dir / "tuning.csv")
    click.echo(
        f"{report.scenario}: T_UC={report.T_UC:g} s, T_SR={report.T_SR:g} s, "
        f"t_r={report.t_r:g} s, gamma={report.gamma:.6g}, "
        f"T_SC<={report.T_SC_bound:.6g} s, feasible={report.feasible}"
    )
    return report


@click.group()
@click.version_option(settings.VERSION, prog_name=settings.APP_NAME)
def cli() -> None:
    """Safe software-rejuvenation timing synthesis and validation."""
    configure_logging(settings.LOG_LEVEL, settings.LOG_FORMAT)


@cli.command()
@scenario_argument
@out_option
@guarded
def certify(scenario: Path, out_dir: Path) -> int:
    """Synthesize E_C, the T_SC bound and T_UC for a scenario."""
    report = _certify(scenario, out_dir)
    return EXIT_OK if report.feasible else EXIT_INFEASIBLE


@cli.command("simulate")
@scenario_argument
@click.option(
    "--attack", type=click.Choice(["none"] + [kind.value for kind in AttackKind]),
    default=None, help="Replace the scenario's attacks",
)
@out_option
@guarded
def simulate_command(scenario: Path, attack: str, out_dir: Path) -> int:
    """Run the rejuvenation loop and write trace.csv."""
    report = _certify(scenario, out_dir)
    if not report.feasible:
        return EXIT_INFEASIBLE
    resolved = resolve(load_scenario(scenario))
    trace = simulate(resolved, report, attack=attack)
    write_trace(trace, out_dir / "trace.csv")
    durations = trace.sc_durations()
    click.echo(
        f"rows={len(trace)} max_V={trace.max_value:.6g} "
        f"sc_phases={len(durations)} violated={trace.violated}"
    )
    return EXIT_VIOLATION if trace.violated else EXIT_OK


@cli.command()
@scenario_argument
@click.option("--runs", type=click.IntRange(min=0), required=True)
@click.option("--seed", type=int, required=True)
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)
@out_option
@guarded
def validate(scenario: Path, runs: int, seed: int, workers: int, out_dir: Path) -> int:
    """Monte Carlo campaign with random_box attacks."""
    report = _certify(scenario, out_dir)
    if not report.feasible:
        return EXIT_INFEASIBLE
    validation = monte_carlo_validate(load_scenario(scenario), report, runs, seed, workers)
    write_report(validation.to_dict(), out_dir / "validation.json")
    click.echo(
        f"runs={validation.runs} violations={validation.violations} "
        f"max_V={validation.max_value} max_sc={validation.max_sc_duration}"
    )
    return EXIT_OK if validation.violations == 0 else EXIT_VIOLATION


@cli.command()
@scenario_argument
@click.option("--strategy", type=click.Choice(sorted(STRATEGIES)), required=True)
@out_option
@guarded
def tune(scenario: Path, strategy: str, out_dir: Path) -> int:
    """Make an infeasible scenario feasible by shrinking epsilon or the limits."""
    report = _certify(scenario, out_dir, strategy=STRATEGIES[strategy])
    return EXIT_OK if report.feasible else EXIT_INFEASIBLE


@cli.command("plot-data")
@scenario_argument
@out_option
@guarded
def plot_data(scenario: Path, out_dir: Path) -> int:
    """Projections, position tracks and the mode timeline as CSV."""
    report = _certify(scenario, out_dir)
    if not report.feasible:
        return EXIT_INFEASIBLE
    resolved = resolve(load_scenario(scenario))
    trace = simulate(resolved, report)
    labels = STATE_LABELS if resolved.quad_params is not None else None
    write_plot_data(report, trace, out_dir, labels)
    return EXIT_VIOLATION if trace.violated else EXIT_OK


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
