"""
Command-line interface for optimal subsampling experiments.

    osmac bench --spec spec.json --out report.json --seed 42 --threads 4
    osmac fit --data file.csv --method mvc --r0 200 --r 1000
    osmac gen --scenario mzNormal --n 10000 --out data.csv
    osmac config generate | validate

Exit codes: 0 success, 1 I/O or other failure, 2 invalid spec or
configuration, 3 estimation failure.
"""

from __future__ import annotations

import dataclasses
import logging
import sys
from pathlib import Path

import click
import numpy as np

from osmac import __version__
from osmac.bench import FORMATS, emit_report, load_spec, run_experiment
from osmac.config import (
    CONFIG_FILENAME,
    find_config_file,
    generate_config_template,
    load_config,
    merge_config_with_cli,
    solver_config,
)
from osmac.datamodel import Dataset, FitResult, Scheme, load_csv, read_binary, write_binary, write_csv
from osmac.errors import ConfigError, DataError, EstimationError, SpecError
from osmac.estimators import (
    MxSource,
    TwoStepConfig,
    algorithm1_estimate,
    estimate_variance,
    lcc_estimate,
    two_step_estimate,
)
from osmac.glm import fit_full
from osmac.sampler import Rng
from osmac.ssp import ssp_uniform, write_plan_csv
from osmac.synthgen import generate, scenario, scenario_names

EXIT_FAILURE = 1
EXIT_SPEC_ERROR = 2
EXIT_ESTIMATION_ERROR = 3

FIT_METHODS = ("uniform", "mmse", "mvc", "lcc", "full")

logger = logging.getLogger(__name__)


def _fail(message: str, code: int) -> None:
    click.echo(f"Error: {message}", err=True)
    sys.exit(code)


def _load_settings(config: str | None) -> dict:
    try:
        return load_config(config)
    except ConfigError as e:
        _fail(str(e), EXIT_SPEC_ERROR)


def _read_data(path: str, response_column: str | None, intercept: bool) -> Dataset:
    if Path(path).suffix.lower() == ".bin":
        return read_binary(path)
    column: str | int = -1
    if response_column is not None:
        column = int(response_column) if response_column.lstrip("-").isdigit() else response_column
    return load_csv(path, column, intercept)


def _format_optional(value) -> str:
    if value is None:
        return "-"
    return f"{value:.6g}"


@click.group()
@click.version_option(__version__, prog_name="osmac")
@click.option("--verbose", "-v", is_flag=True, help="Log solver and sampling details (DEBUG level)")
def cli(verbose: bool) -> None:
    """Optimal subsampling for logistic regression."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s: %(message)s",
    )


@cli.command()
@click.option(
    "--spec",
    "spec_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="Experiment spec (.json or .toml)",
)
@click.option("--out", "-o", type=click.Path(dir_okay=False), required=True, help="Report output path")
@click.option("--seed", type=int, default=None, help="Root seed (overrides spec and config)")
@click.option("--reps", type=int, default=None, help="Repetitions (overrides spec and config)")
@click.option("--threads", type=int, default=None, help="Worker processes (overrides config)")
@click.option(
    "--format",
    "fmt",
    type=click.Choice(FORMATS, case_sensitive=False),
    default=None,
    help="Report format (default: json)",
)
@click.option(
    "--config", "-c", type=click.Path(), default=None, help=f"Configuration file (default: {CONFIG_FILENAME})"
)
def bench(
    spec_path: str,
    out: str,
    seed: int | None,
    reps: int | None,
    threads: int | None,
    fmt: str | None,
    config: str | None,
) -> None:
    """Run a repetition study and write its report."""
    settings = _load_settings(config)
    bench_settings = merge_config_with_cli(settings, "bench", {"threads": threads, "format": fmt})
    ssp_settings = merge_config_with_cli(settings, "ssp", {})
    defaults = {
        "reps": bench_settings["reps"],
        "seed": bench_settings["seed"],
        "r0": bench_settings["r0"],
        "threads": bench_settings["threads"],
        "floor": ssp_settings["floor"],
        "mx_source": ssp_settings["mx_source"],
        "solver": merge_config_with_cli(settings, "solver", {}),
    }
    flags = {"seed": seed, "reps": reps, "threads": threads}
    overrides = {key: value for key, value in flags.items() if value is not None}

    try:
        spec = dataclasses.replace(load_spec(spec_path, defaults=defaults), **overrides)
        click.echo(f"Running {spec.reps} repetitions on {spec.source} ({', '.join(spec.methods)})")
        report = run_experiment(spec)
        emit_report(report, out, bench_settings["format"].lower())
    except SpecError as e:
        _fail(str(e), EXIT_SPEC_ERROR)
    except EstimationError as e:
        _fail(f"full-data fit failed: {e}", EXIT_ESTIMATION_ERROR)
    except (OSError, DataError) as e:
        _fail(str(e), EXIT_FAILURE)

    click.echo("")
    click.echo(f"{'method':<16}{'r0':>8}{'r':>8}{'failures':>10}{'mse':>14}")
    for row in report.results:
        r0 = "-" if row.r0 is None else str(row.r0)
        r = "-" if row.r is None else str(row.r)
        click.echo(f"{row.method:<16}{r0:>8}{r:>8}{row.failure_count:>10}{_format_optional(row.mse):>14}")
    click.echo(f"\nReport written to {out}")


@cli.command()
@click.option(
    "--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False), help="CSV or .bin dataset"
)
@click.option(
    "--method", type=click.Choice(FIT_METHODS, case_sensitive=False), default="mvc", help="Estimator (default: mvc)"
)
@click.option("--r0", type=int, default=None, help="Pilot subsample size (default: config bench.r0, 200)")
@click.option("--r", "r", type=int, default=1000, help="Second-step subsample size (default: 1000)")
@click.option(
    "--pilot",
    type=click.Choice([Scheme.UNIFORM.value, Scheme.CASE_CONTROL.value], case_sensitive=False),
    default=Scheme.CASE_CONTROL.value,
    help="Pilot sampling scheme (default: case_control)",
)
@click.option(
    "--mx-source",
    type=click.Choice([source.value for source in MxSource], case_sensitive=False),
    default=None,
    help="M_X estimate for mmse (default: config ssp.mx_source, full_data)",
)
@click.option("--floor", type=float, default=None, help="Probability floor for optimal plans (default: 0)")
@click.option("--seed", type=int, default=None, help="Seed (default: config bench.seed, 0)")
@click.option("--response-column", type=str, default=None, help="Response column name or index (default: last)")
@click.option("--intercept/--no-intercept", default=True, help="Prepend an intercept column (default: True)")
@click.option("--dump-ssp", type=click.Path(dir_okay=False), default=None, help="Write the sampling plan as CSV")
@click.option(
    "--config", "-c", type=click.Path(), default=None, help=f"Configuration file (default: {CONFIG_FILENAME})"
)
def fit(
    data_path: str,
    method: str,
    r0: int | None,
    r: int,
    pilot: str,
    mx_source: str | None,
    floor: float | None,
    seed: int | None,
    response_column: str | None,
    intercept: bool,
    dump_ssp: str | None,
    config: str | None,
) -> None:
    """Estimate coefficients and standard errors from one subsample."""
    settings = _load_settings(config)
    bench_settings = merge_config_with_cli(settings, "bench", {"r0": r0, "seed": seed})
    ssp_settings = merge_config_with_cli(settings, "ssp", {"floor": floor, "mx_source": mx_source})
    solver = solver_config(settings)
    rng = Rng(bench_settings["seed"])
    method = method.lower()

    try:
        data = _read_data(data_path, response_column, intercept)
    except DataError as e:
        _fail(str(e), EXIT_FAILURE)

    try:
        if method == "full":
            result = fit_full(data, solver)
        elif method == "uniform":
            plan = ssp_uniform(data.n)
            if dump_ssp:
                write_plan_csv(plan, dump_ssp)
            result, subsample = algorithm1_estimate(data, plan, bench_settings["r0"] + r, rng, solver)
            result = result.with_vcov(estimate_variance(subsample, data, result.beta).vcov)
        elif method == "lcc":
            result = lcc_estimate(data, bench_settings["r0"], rng, solver, r=r, dump_ssp=dump_ssp)
        else:
            cfg = TwoStepConfig(
                r0=bench_settings["r0"],
                r=r,
                pilot_scheme=Scheme(pilot.lower()),
                criterion=Scheme(method),
                mx_source=MxSource(ssp_settings["mx_source"].lower()),
                solver=solver,
                floor=float(ssp_settings["floor"]),
            )
            result, _ = two_step_estimate(data, cfg, rng, dump_ssp=dump_ssp)
    except EstimationError as e:
        _fail(f"estimation failed: {e}", EXIT_ESTIMATION_ERROR)
    except (DataError, ValueError) as e:
        _fail(str(e), EXIT_SPEC_ERROR)

    _echo_fit(data, result, method)


def _echo_fit(data: Dataset, result: FitResult, method: str) -> None:
    names = data.feature_names or tuple(f"x{j}" for j in range(data.d))
    click.echo(f"Method: {method} (n={data.n}, d={data.d})")
    click.echo(f"{'coefficient':<20}{'estimate':>16}{'se':>16}")
    se = result.se if result.se is not None else np.full(data.d, np.nan)
    for name, estimate, error in zip(names, result.beta, se, strict=True):
        click.echo(f"{name:<20}{estimate:>16.6g}{error:>16.6g}")
    status = "converged" if result.converged else "NOT converged"
    click.echo(f"Newton: {status} in {result.iterations} iterations")


@cli.command()
@click.option(
    "--scenario",
    "scenario_name",
    required=True,
    help=f"Scenario preset, case-insensitive ({', '.join(scenario_names())})",
)
@click.option("--n", "n", type=int, default=10_000, help="Rows to generate (default: 10000)")
@click.option("--out", "-o", type=click.Path(dir_okay=False), required=True, help="Output path (.csv or .bin)")
@click.option("--seed", type=int, default=0, help="Seed (default: 0)")
@click.option("--stream", type=int, default=0, help="Stream index (default: 0)")
def gen(scenario_name: str, n: int, out: str, seed: int, stream: int) -> None:
    """Generate a synthetic dataset."""
    try:
        scn = scenario(scenario_name, n)
    except ValueError as e:
        _fail(str(e), EXIT_SPEC_ERROR)

    data = generate(scn, Rng(seed, stream))
    if Path(out).suffix.lower() == ".bin":
        write_binary(data, out)
    else:
        write_csv(data, out)
    click.echo(f"Wrote {data.n} rows of {scn.kind.value} ({int(data.y.sum())} ones) to {out}")


@cli.group("config")
def config_group():
    """Configuration management commands."""
    pass


@config_group.command("generate")
@click.option(
    "--config",
    "-c",
    type=click.Path(),
    default=None,
    help=f"Path to configuration file (default: {CONFIG_FILENAME} in current directory)",
)
@click.option("--force", is_flag=True, help="Overwrite existing configuration file without prompting")
def config_generate(config: str | None, force: bool) -> None:
    """Generate a default configuration file."""
    config_path = Path.cwd() / CONFIG_FILENAME if config is None else Path(config)

    if config_path.exists() and not force:
        if not click.confirm(f"Configuration file exists at {config_path}. Overwrite?"):
            click.echo("Aborted.")
            return

    config_path.write_text(generate_config_template(), encoding="utf-8")
    click.echo(f"Configuration file generated at {config_path}")


@config_group.command("validate")
@click.option("--config", "-c", type=click.Path(), default=None, help="Path to configuration file to validate")
def config_validate(config: str | None) -> None:
    """Validate a configuration file."""
    config_path = find_config_file(config)
    if config_path is None:
        _fail("Configuration file not found.", EXIT_FAILURE)

    try:
        load_config(str(config_path), required=True)
    except ConfigError as e:
        _fail(f"Configuration file is invalid: {e}", EXIT_SPEC_ERROR)
    click.echo(f"Configuration file {config_path} is valid.")


def entry_point():
    """Console script entry point."""
    cli(prog_name="osmac")


if __name__ == "__main__":
    entry_point()
