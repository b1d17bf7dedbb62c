"""
Monte-Carlo experiment harness.

An ExperimentSpec names a data source (scenario preset or CSV file), the
methods to compare, the subsample sizes, and the metrics to report.
``run_experiment`` repeats every (method, size) estimate ``reps`` times and
aggregates the results into an ExperimentReport.

Random streams: repetition s uses ``Rng(seed, stream=s)``. Inside it, the
dataset of an unconditional run comes from child ``DATA_KEY``, the validation
set from ``VALIDATION_KEY``, and method m at grid point p from
``spawn(METHOD_KEY_BASE + METHODS.index(m)).spawn(p)``. A fixed dataset
(conditional runs) uses ``Rng(seed, 0).spawn(DATA_KEY)``. Results do not
depend on the number of worker processes.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from scipy.stats import norm

from osmac import __version__
from osmac.datamodel import Dataset, FitResult, Scheme, load_csv
from osmac.errors import EstimationError, OsmacError, SpecError
from osmac.estimators import (
    MxSource,
    TwoStepConfig,
    algorithm1_estimate,
    estimate_variance,
    lcc_estimate,
    two_step_estimate,
)
from osmac.glm import SolverConfig, fit_full
from osmac.metrics import auc, classify, squared_error
from osmac.sampler import Rng
from osmac.ssp import ssp_uniform
from osmac.synthgen import Scenario, generate
from osmac.synthgen import scenario as lookup_scenario

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

METHODS = ("uniform", "mmse", "mvc", "lcc", "full", "bootstrap_full")
SUBSAMPLE_METHODS = ("uniform", "mmse", "mvc", "lcc")
METRICS = ("mse", "est_mse", "coverage", "accuracy", "auc", "timing")
FORMATS = ("json", "csv")

DATA_KEY = 0
VALIDATION_KEY = 1
METHOD_KEY_BASE = 2

# two-sided 95% interval for beta_1
COVERAGE_Z = float(norm.ppf(0.975))


@dataclass(frozen=True)
class GridPoint:
    """One subsample size setting: step-1 size r0 and step-2 size r."""

    r0: int
    r: int
    fraction: float | None = None


@dataclass(frozen=True)
class ExperimentSpec:
    """
    Description of one experiment.

    Parameters
    ----------
    source : str
        Scenario preset name (see ``osmac.synthgen.PRESETS``) or a path ending in ``.csv``.
    methods : tuple of str
        Subset of METHODS.
    r0 : int
        Step-1 size for every r in ``r_grid``.
    r_grid : tuple of int
        Step-2 sizes.
    allocation_grid : tuple of float, optional
        r0 / (r0 + r) fractions at fixed ``total``; replaces ``r_grid`` when given.
    total : int, optional
        r0 + r for the allocation grid.
    reps : int
        Repetitions S.
    seed : int
        Root seed.
    metrics : tuple of str
        Subset of METRICS.
    validation : str or float, optional
        "generate" (fresh replicate of the scenario), a holdout CSV path, or a
        split fraction in (0, 1). Accuracy and AUC use it when given.
    n : int
        Rows generated for scenario sources.
    unconditional : bool
        Generate a new dataset every repetition and measure error against
        beta_true (scenario sources only).
    """

    source: str
    methods: tuple[str, ...]
    r0: int
    r_grid: tuple[int, ...] = ()
    allocation_grid: tuple[float, ...] | None = None
    total: int | None = None
    reps: int = 100
    seed: int = 0
    metrics: tuple[str, ...] = ("mse",)
    validation: str | float | None = None
    n: int = 10_000
    unconditional: bool = False
    pilot_scheme: str = "case_control"
    mx_source: str = "full_data"
    floor: float = 0.0
    threshold: float = 0.5
    max_pilot_attempts: int = 1
    response_column: str | int = -1
    intercept: bool = True
    threads: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        for name in ("methods", "r_grid", "metrics"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.allocation_grid is not None:
            object.__setattr__(self, "allocation_grid", tuple(float(f) for f in self.allocation_grid))
        self._validate()

    def _validate(self) -> None:
        if not self.methods:
            raise SpecError("methods must not be empty")
        for method in self.methods:
            if method not in METHODS:
                raise SpecError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
        if len(set(self.methods)) != len(self.methods):
            raise SpecError(f"duplicate methods in {list(self.methods)}")
        for metric in self.metrics:
            if metric not in METRICS:
                raise SpecError(f"unknown metric {metric!r}; choose from {', '.join(METRICS)}")
        if self.reps < 1:
            raise SpecError(f"reps must be >= 1, got {self.reps}")
        if self.r0 < 1:
            raise SpecError(f"r0 must be >= 1, got {self.r0}")
        if self.n < 1:
            raise SpecError(f"n must be >= 1, got {self.n}")
        if self.threads < 1:
            raise SpecError(f"threads must be >= 1, got {self.threads}")
        if self.max_pilot_attempts < 1:
            raise SpecError(f"max_pilot_attempts must be >= 1, got {self.max_pilot_attempts}")
        if not 0.0 <= self.floor < 1.0:
            raise SpecError(f"floor must be in [0, 1), got {self.floor}")
        if not 0.0 < self.threshold < 1.0:
            raise SpecError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.pilot_scheme not in (Scheme.UNIFORM.value, Scheme.CASE_CONTROL.value):
            raise SpecError(f"pilot_scheme must be 'uniform' or 'case_control', got {self.pilot_scheme!r}")
        if self.mx_source not in [source.value for source in MxSource]:
            raise SpecError(f"mx_source must be 'full_data' or 'pilot_subsample', got {self.mx_source!r}")

        if self.allocation_grid is not None:
            if not self.allocation_grid:
                raise SpecError("allocation_grid must not be empty")
            if self.total is None or self.total < 2:
                raise SpecError("allocation_grid needs total >= 2")
            for fraction in self.allocation_grid:
                if not 0.0 < fraction < 1.0:
                    raise SpecError(f"allocation fractions must be in (0, 1), got {fraction}")
                r0 = round(fraction * self.total)
                if r0 < 1 or r0 >= self.total:
                    raise SpecError(f"fraction {fraction} of total {self.total} leaves an empty step")
        elif any(m in SUBSAMPLE_METHODS for m in self.methods):
            if not self.r_grid:
                raise SpecError("r_grid must not be empty")
            if any(r < 1 for r in self.r_grid):
                raise SpecError(f"every r must be >= 1, got {list(self.r_grid)}")

        if self.is_csv:
            if self.unconditional:
                raise SpecError("unconditional runs need a scenario source")
            if self.validation == "generate":
                raise SpecError("validation 'generate' needs a scenario source")
        else:
            try:
                lookup_scenario(self.source, self.n)
            except ValueError as exc:
                raise SpecError(str(exc)) from None

        if isinstance(self.validation, float) and not isinstance(self.validation, bool):
            if not 0.0 < self.validation < 1.0:
                raise SpecError(f"validation split fraction must be in (0, 1), got {self.validation}")
        elif self.validation is not None and not isinstance(self.validation, str):
            raise SpecError(f"validation must be 'generate', a CSV path or a fraction, got {self.validation!r}")

    @property
    def is_csv(self) -> bool:
        return Path(self.source).suffix.lower() == ".csv"

    @property
    def scenario(self) -> Scenario | None:
        return None if self.is_csv else lookup_scenario(self.source, self.n)

    def grid_points(self) -> list[GridPoint]:
        if self.allocation_grid is not None:
            points = []
            for fraction in self.allocation_grid:
                r0 = round(fraction * self.total)
                points.append(GridPoint(r0=r0, r=self.total - r0, fraction=fraction))
            return points
        return [GridPoint(r0=self.r0, r=r) for r in self.r_grid]

    def two_step_config(self, criterion: Scheme, point: GridPoint) -> TwoStepConfig:
        return TwoStepConfig(
            r0=point.r0,
            r=point.r,
            pilot_scheme=Scheme(self.pilot_scheme),
            criterion=criterion,
            mx_source=MxSource(self.mx_source),
            solver=self.solver,
            floor=self.floor,
            max_pilot_attempts=self.max_pilot_attempts,
        )

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> ExperimentSpec:
        """
        Build a spec from parsed JSON/TOML.

        Raises
        ------
        SpecError
            Unknown or missing keys, wrong types, or invalid values.
        """
        if not isinstance(raw, dict):
            raise SpecError("experiment spec must be a table/object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise SpecError(f"unknown spec keys: {', '.join(unknown)}")
        for required in ("source", "methods", "r0"):
            if required not in raw:
                raise SpecError(f"spec is missing required key {required!r}")

        values = dict(raw)
        if isinstance(values.get("methods"), str):
            values["methods"] = [values["methods"]]
        if isinstance(values.get("metrics"), str):
            values["metrics"] = [values["metrics"]]
        solver = values.get("solver", {})
        if not isinstance(solver, dict):
            raise SpecError("solver must be a table/object")
        try:
            values["solver"] = SolverConfig(**solver)
        except (TypeError, ValueError) as exc:
            raise SpecError(f"invalid solver settings: {exc}") from None

        validations = [
            ("source", str),
            ("methods", list | tuple),
            ("r0", int),
            ("r_grid", list | tuple),
            ("allocation_grid", list | tuple),
            ("total", int),
            ("reps", int),
            ("seed", int),
            ("metrics", list | tuple),
            ("validation", str | int | float),
            ("n", int),
            ("unconditional", bool),
            ("pilot_scheme", str),
            ("mx_source", str),
            ("floor", int | float),
            ("threshold", int | float),
            ("max_pilot_attempts", int),
            ("response_column", str | int),
            ("intercept", bool),
            ("threads", int),
        ]
        for key, expected_type in validations:
            if key in values and values[key] is not None:
                value = values[key]
                if not isinstance(value, expected_type) or (isinstance(value, bool) and expected_type is not bool):
                    raise SpecError(f"invalid type for {key}: expected {expected_type}, got {type(value).__name__}")
        if isinstance(values.get("validation"), int):
            values["validation"] = float(values["validation"])
        for key in ("floor", "threshold"):
            if key in values:
                values[key] = float(values[key])
        return cls(**values)

    def to_dict(self) -> dict[str, Any]:
        """Settings echoed into the report; worker count is left out because it never changes results."""
        result = {}
        for f in dataclasses.fields(self):
            if f.name == "threads":
                continue
            value = getattr(self, f.name)
            if isinstance(value, SolverConfig):
                value = dataclasses.asdict(value)
            elif isinstance(value, tuple):
                value = list(value)
            result[f.name] = value
        return result


def read_spec_dict(path: str | Path) -> dict[str, Any]:
    """
    Parse a ``.json`` or ``.toml`` spec file without validating it.

    Raises
    ------
    SpecError
        Unsupported suffix, unreadable file, or invalid content.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    try:
        if suffix == ".json":
            raw = json.loads(path.read_text(encoding="utf-8"))
        elif suffix == ".toml":
            with open(path, "rb") as f:
                raw = tomllib.load(f)
        else:
            raise SpecError(f"spec file must end in .json or .toml, got {path.name}")
    except OSError as exc:
        raise SpecError(f"cannot read spec {path}: {exc}") from None
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise SpecError(f"cannot parse spec {path}: {exc}") from None
    return raw


def load_spec(path: str | Path, defaults: dict[str, Any] | None = None) -> ExperimentSpec:
    """
    Read an ExperimentSpec from a ``.json`` or ``.toml`` file.

    ``defaults`` fill keys the file leaves out.
    """
    raw = read_spec_dict(path)
    if not isinstance(raw, dict):
        raise SpecError(f"spec {path} must hold a table/object")
    for key, value in (defaults or {}).items():
        raw.setdefault(key, value)
    return ExperimentSpec.from_dict(raw)


@dataclass(frozen=True)
class RepRecord:
    """Outcome of one (repetition, method, grid point) estimate."""

    rep: int
    method: str
    point: int
    ok: bool
    beta: tuple[float, ...] = ()
    sq_error: float = math.nan
    trace_v: float = math.nan
    covered: float = math.nan
    accuracy: float = math.nan
    auc: float = math.nan
    ssp_seconds: float = math.nan
    solve_seconds: float = math.nan


@dataclass
class MethodSummary:
    """Aggregates for one method at one grid point; ``None`` marks metrics not requested or not available."""

    method: str
    r0: int | None
    r: int | None
    fraction: float | None
    successes: int
    failure_count: int
    mse: float | None = None
    mse_sd: float | None = None
    est_mse: float | None = None
    coverage: float | None = None
    accuracy: float | None = None
    auc: float | None = None
    timing: dict[str, float | None] | None = None
    estimate: list[float] | None = None


@dataclass
class ExperimentReport:
    spec: dict[str, Any]
    n: int
    d: int
    mse_target: str
    coverage_target: str
    full_fit: dict[str, Any] | None
    results: list[MethodSummary]

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": __version__,
            "spec": self.spec,
            "data": {"n": self.n, "d": self.d},
            "mse_target": self.mse_target,
            "coverage_target": self.coverage_target,
            "full_fit": self.full_fit,
            "results": [dataclasses.asdict(summary) for summary in self.results],
        }

    def summary(self, method: str, r: int | None = None, fraction: float | None = None) -> MethodSummary:
        """First result row for ``method`` matching ``r`` and/or ``fraction`` when given."""
        for row in self.results:
            if row.method != method:
                continue
            if r is not None and row.r != r:
                continue
            if fraction is not None and row.fraction != fraction:
                continue
            return row
        raise KeyError(f"no result for method={method!r} r={r} fraction={fraction}")


@dataclass(frozen=True)
class _Context:
    """Everything a worker needs to run repetitions; picklable."""

    spec: ExperimentSpec
    points: tuple[GridPoint, ...]
    data: Dataset | None
    validation: Dataset | None
    mse_target: np.ndarray | None
    coverage_target: np.ndarray | None
    full_fit: FitResult | None


def _coverage_index(data: Dataset) -> int:
    """Position of beta_1: right after the intercept column when there is one."""
    names = data.feature_names
    return 1 if names and names[0] == "intercept" and data.d > 1 else 0


def _record(
    spec: ExperimentSpec,
    rep: int,
    method: str,
    point: int,
    fit: FitResult,
    data: Dataset,
    validation: Dataset | None,
    mse_target: np.ndarray | None,
    coverage_target: np.ndarray | None,
    vcov: np.ndarray | None,
) -> RepRecord:
    metrics = set(spec.metrics)
    values: dict[str, float] = {}
    if mse_target is not None:
        values["sq_error"] = squared_error(fit.beta, mse_target)
    if vcov is not None:
        values["trace_v"] = float(np.trace(vcov))
    if vcov is not None and coverage_target is not None:
        j = _coverage_index(data)
        se = math.sqrt(max(float(vcov[j, j]), 0.0))
        values["covered"] = float(abs(fit.beta[j] - coverage_target[j]) <= COVERAGE_Z * se)
    evaluation = validation if validation is not None else data
    if "accuracy" in metrics:
        values["accuracy"] = classify(fit.beta, evaluation, spec.threshold)[1]
    if "auc" in metrics:
        try:
            values["auc"] = auc(fit.beta, evaluation)
        except OsmacError:
            pass
    values["ssp_seconds"] = fit.timings.get("ssp", 0.0)
    values["solve_seconds"] = fit.timings.get("solve", math.nan)
    return RepRecord(rep=rep, method=method, point=point, ok=True, beta=tuple(float(b) for b in fit.beta), **values)


def _estimate(
    ctx: _Context, method: str, point: GridPoint, data: Dataset, rng: Rng
) -> tuple[FitResult, np.ndarray | None]:
    spec = ctx.spec
    wants_variance = "est_mse" in spec.metrics or "coverage" in spec.metrics
    if method == "uniform":
        started = time.perf_counter()
        plan = ssp_uniform(data.n)
        ssp_seconds = time.perf_counter() - started
        fit, subsample = algorithm1_estimate(data, plan, point.r0 + point.r, rng, spec.solver)
        fit = fit.with_timings(ssp=ssp_seconds)
        vcov = estimate_variance(subsample, data, fit.beta).vcov if wants_variance else None
        return fit, vcov
    if method in ("mmse", "mvc"):
        fit, variance = two_step_estimate(data, spec.two_step_config(Scheme(method), point), rng)
        return fit, variance.vcov
    fit = lcc_estimate(data, point.r0, rng, spec.solver, r=point.r, max_pilot_attempts=spec.max_pilot_attempts)
    return fit, None


def _bootstrap_once(data: Dataset, rng: Rng, solver: SolverConfig) -> FitResult:
    """Uniform resample of all n rows, fitted like a single-step subsample estimate."""
    fit, _ = algorithm1_estimate(data, ssp_uniform(data.n), data.n, rng, solver)
    return fit


def _run_repetition(ctx: _Context, rep: int) -> list[RepRecord]:
    spec = ctx.spec
    rng = Rng(spec.seed, stream=rep)
    if spec.unconditional:
        scn = spec.scenario
        data = generate(scn, rng.spawn(DATA_KEY))
        validation = ctx.validation
        if spec.validation == "generate":
            validation = generate(scn, rng.spawn(VALIDATION_KEY))
        elif isinstance(spec.validation, float):
            data, validation = data.split(spec.validation, rng.spawn(VALIDATION_KEY))
        mse_target = coverage_target = scn.beta_true
    else:
        data, validation = ctx.data, ctx.validation
        mse_target, coverage_target = ctx.mse_target, ctx.coverage_target

    records: list[RepRecord] = []
    for method in spec.methods:
        method_rng = rng.spawn(METHOD_KEY_BASE + METHODS.index(method))
        if method == "full":
            try:
                if ctx.full_fit is not None:
                    fit = ctx.full_fit
                elif not spec.unconditional:
                    raise EstimationError("full-data MLE of the fixed dataset was not found")
                else:
                    started = time.perf_counter()
                    fit = fit_full(data, spec.solver)
                    fit = fit.with_timings(ssp=0.0, solve=time.perf_counter() - started)
                records.append(
                    _record(spec, rep, method, 0, fit, data, validation, mse_target, coverage_target, fit.vcov)
                )
            except OsmacError as exc:
                logger.debug("rep %d full fit failed: %s", rep, exc)
                records.append(RepRecord(rep=rep, method=method, point=0, ok=False))
            continue
        if method == "bootstrap_full":
            try:
                fit = _bootstrap_once(data, method_rng, spec.solver)
                records.append(_record(spec, rep, method, 0, fit, data, validation, mse_target, coverage_target, None))
            except OsmacError as exc:
                logger.debug("rep %d bootstrap failed: %s", rep, exc)
                records.append(RepRecord(rep=rep, method=method, point=0, ok=False))
            continue
        for index, point in enumerate(ctx.points):
            try:
                fit, vcov = _estimate(ctx, method, point, data, method_rng.spawn(index))
                records.append(
                    _record(spec, rep, method, index, fit, data, validation, mse_target, coverage_target, vcov)
                )
            except OsmacError as exc:
                logger.debug("rep %d %s r0=%d r=%d failed: %s", rep, method, point.r0, point.r, exc)
                records.append(RepRecord(rep=rep, method=method, point=index, ok=False))
    return records


def _run_chunk(args: tuple[_Context, list[int]]) -> list[RepRecord]:
    """Worker entry point; module level so ProcessPoolExecutor can pickle it."""
    ctx, reps = args
    records = []
    for rep in reps:
        records.extend(_run_repetition(ctx, rep))
    return records


def _prepare(spec: ExperimentSpec) -> tuple[_Context, int, int, str, str]:
    validation = None
    data = None
    mse_target = coverage_target = None
    full = None
    fixed_rng = Rng(spec.seed, 0)

    if spec.is_csv:
        data = load_csv(spec.source, spec.response_column, spec.intercept)
        mse_label = coverage_label = "full_mle"
    else:
        scn = spec.scenario
        mse_label = "beta_true" if spec.unconditional else "full_mle"
        coverage_label = "beta_true"
        if not spec.unconditional:
            data = generate(scn, fixed_rng.spawn(DATA_KEY))
        if spec.validation == "generate" and not spec.unconditional:
            validation = generate(scn, fixed_rng.spawn(VALIDATION_KEY))

    if isinstance(spec.validation, float) and data is not None:
        data, validation = data.split(spec.validation, fixed_rng.spawn(VALIDATION_KEY))
    elif isinstance(spec.validation, str) and spec.validation != "generate":
        validation = load_csv(spec.validation, spec.response_column, spec.intercept)

    if data is not None:
        needs_full = "mse" in spec.metrics or (spec.is_csv and "coverage" in spec.metrics)
        if needs_full or "full" in spec.methods:
            started = time.perf_counter()
            try:
                full = fit_full(data, spec.solver)
            except EstimationError as exc:
                if needs_full:
                    raise
                logger.warning("full-data MLE not found, 'full' repetitions are counted as failures: %s", exc)
            else:
                full = full.with_timings(ssp=0.0, solve=time.perf_counter() - started)
                mse_target = full.beta
        if spec.is_csv:
            coverage_target = mse_target
        else:
            coverage_target = spec.scenario.beta_true
        n, d = data.n, data.d
    else:
        n, d = spec.n, spec.scenario.d

    if validation is not None and validation.d != d:
        raise SpecError(f"validation data has {validation.d} columns, training data has {d}")

    ctx = _Context(
        spec=spec,
        points=tuple(spec.grid_points()),
        data=data,
        validation=validation,
        mse_target=mse_target,
        coverage_target=coverage_target,
        full_fit=full,
    )
    return ctx, n, d, mse_label, coverage_label


def _mean(values: np.ndarray) -> float | None:
    return float(np.mean(values)) if values.size else None


def _std(values: np.ndarray) -> float | None:
    return float(np.std(values, ddof=1)) if values.size >= 2 else None


def _summarize(spec: ExperimentSpec, method: str, point: GridPoint | None, n: int, records: list[RepRecord]):
    ok = [rec for rec in records if rec.ok]
    metrics = set(spec.metrics)

    def column(name: str) -> np.ndarray:
        values = np.array([getattr(rec, name) for rec in ok], dtype=np.float64)
        return values[~np.isnan(values)]

    if point is None:
        r0, r, fraction = None, (n if method == "bootstrap_full" else None), None
    else:
        r0, r, fraction = point.r0, point.r, point.fraction
    summary = MethodSummary(
        method=method, r0=r0, r=r, fraction=fraction, successes=len(ok), failure_count=len(records) - len(ok)
    )
    if "mse" in metrics:
        summary.mse = _mean(column("sq_error"))
        summary.mse_sd = _std(column("sq_error"))
    if "est_mse" in metrics:
        summary.est_mse = _mean(column("trace_v"))
    if "coverage" in metrics:
        summary.coverage = _mean(column("covered"))
    if "accuracy" in metrics:
        summary.accuracy = _mean(column("accuracy"))
    if "auc" in metrics:
        summary.auc = _mean(column("auc"))
    if "timing" in metrics:
        ssp, solve = column("ssp_seconds"), column("solve_seconds")
        summary.timing = {
            "ssp_mean": _mean(ssp),
            "ssp_std": _std(ssp),
            "solve_mean": _mean(solve),
            "solve_std": _std(solve),
        }
    if spec.reps == 1 and ok:
        summary.estimate = list(ok[0].beta)
    return summary


def run_experiment(spec: ExperimentSpec, threads: int | None = None) -> ExperimentReport:
    """
    Run every repetition of ``spec`` and aggregate the results.

    Estimation failures (no MLE, singular matrices, empty acceptance) are
    counted per method and grid point; aggregates use successful repetitions
    only. ``threads`` overrides ``spec.threads``.

    Raises
    ------
    SpecError
        Inconsistent spec or validation data.
    EstimationError
        The full-data MLE of a fixed dataset does not exist and a requested
        metric is measured against it ("mse", or "coverage" on CSV data).
    """
    workers = threads or spec.threads
    ctx, n, d, mse_label, coverage_label = _prepare(spec)
    logger.info("running %d repetitions of %s on %d worker(s)", spec.reps, ", ".join(spec.methods), workers)

    reps = list(range(spec.reps))
    if workers == 1 or spec.reps == 1:
        records = _run_chunk((ctx, reps))
    else:
        chunks = [reps[i::workers] for i in range(workers) if reps[i::workers]]
        records = []
        with ProcessPoolExecutor(max_workers=len(chunks)) as executor:
            futures = [executor.submit(_run_chunk, (ctx, chunk)) for chunk in chunks]
            for future in as_completed(futures):
                records.extend(future.result())

    grouped: dict[tuple[str, int], list[RepRecord]] = {}
    for rec in sorted(records, key=lambda rec: (rec.method, rec.point, rec.rep)):
        grouped.setdefault((rec.method, rec.point), []).append(rec)

    results = []
    for method in spec.methods:
        if method in SUBSAMPLE_METHODS:
            for index, point in enumerate(ctx.points):
                results.append(_summarize(spec, method, point, n, grouped.get((method, index), [])))
        else:
            results.append(_summarize(spec, method, None, n, grouped.get((method, 0), [])))

    full_fit = None
    if ctx.full_fit is not None:
        full_fit = {
            "beta": [float(b) for b in ctx.full_fit.beta],
            "se": None if ctx.full_fit.se is None else [float(s) for s in ctx.full_fit.se],
            "converged": bool(ctx.full_fit.converged),
            "iterations": int(ctx.full_fit.iterations),
        }
    return ExperimentReport(
        spec=spec.to_dict(),
        n=n,
        d=d,
        mse_target=mse_label,
        coverage_target=coverage_label,
        full_fit=full_fit,
        results=results,
    )


@dataclass(frozen=True)
class BootstrapResult:
    mse: float | None
    successes: int
    failure_count: int


def run_bootstrap_full(
    data: Dataset,
    reps: int,
    rng: Rng,
    target: np.ndarray,
    solver: SolverConfig | None = None,
) -> BootstrapResult:
    """
    Full-data bootstrap baseline: uniform resampling with r = n, ``reps`` times.

    Repetition s draws from ``rng.spawn(s)``. Samples without an MLE are
    counted and left out of the MSE against ``target``.
    """
    if reps < 1:
        raise SpecError(f"reps must be >= 1, got {reps}")
    solver = solver or SolverConfig()
    errors = []
    failures = 0
    for s in range(reps):
        try:
            fit = _bootstrap_once(data, rng.spawn(s), solver)
        except EstimationError as exc:
            logger.debug("bootstrap sample %d failed: %s", s, exc)
            failures += 1
            continue
        errors.append(squared_error(fit.beta, target))
    return BootstrapResult(mse=_mean(np.array(errors)), successes=len(errors), failure_count=failures)


def report_frame(report: ExperimentReport) -> pd.DataFrame:
    """One row per (method, grid point), timing flattened into columns."""
    rows = []
    for summary in report.results:
        row = dataclasses.asdict(summary)
        timing = row.pop("timing")
        row.pop("estimate")
        if timing is not None:
            row.update(timing)
        rows.append(row)
    return pd.DataFrame(rows)


def emit_report(report: ExperimentReport, path: str | Path, fmt: str = "json") -> Path:
    """
    Write ``report`` as JSON (full report) or CSV (result rows only).

    JSON output is byte-identical for identical spec and seed unless the
    timing metric is requested.
    """
    if fmt not in FORMATS:
        raise SpecError(f"unknown report format {fmt!r}; choose from {', '.join(FORMATS)}")
    path = Path(path)
    if fmt == "json":
        path.write_text(json.dumps(report.to_dict(), indent=2, allow_nan=False) + "\n", encoding="utf-8")
    else:
        report_frame(report).to_csv(path, index=False, float_format="%.17g")
    logger.info("report written to %s", path)
    return path


_NUMBER = (int, float)
_OPTIONAL_NUMBER = (int, float, type(None))

REPORT_SCHEMA = [
    ("version", str),
    ("spec", dict),
    ("data", dict),
    ("mse_target", str),
    ("coverage_target", str),
    ("full_fit", (dict, type(None))),
    ("results", list),
]

RESULT_SCHEMA = [
    ("method", str, list(METHODS)),
    ("r0", (int, type(None)), None),
    ("r", (int, type(None)), None),
    ("fraction", _OPTIONAL_NUMBER, None),
    ("successes", int, lambda x: x >= 0),
    ("failure_count", int, lambda x: x >= 0),
    ("mse", _OPTIONAL_NUMBER, None),
    ("mse_sd", _OPTIONAL_NUMBER, None),
    ("est_mse", _OPTIONAL_NUMBER, None),
    ("coverage", _OPTIONAL_NUMBER, lambda x: x is None or 0 <= x <= 1),
    ("accuracy", _OPTIONAL_NUMBER, lambda x: x is None or 0 <= x <= 1),
    ("auc", _OPTIONAL_NUMBER, lambda x: x is None or 0 <= x <= 1),
    ("timing", (dict, type(None)), None),
    ("estimate", (list, type(None)), None),
]


def validate_report_dict(report: dict[str, Any]) -> None:
    """
    Check a parsed JSON report against the documented schema.

    Raises
    ------
    SpecError
        Missing key, wrong type, or out-of-range value.
    """
    for key, expected_type in REPORT_SCHEMA:
        if key not in report:
            raise SpecError(f"report is missing {key!r}")
        if not isinstance(report[key], expected_type):
            got = type(report[key]).__name__
            raise SpecError(f"invalid type for report.{key}: expected {expected_type}, got {got}")
    for key in ("n", "d"):
        if not isinstance(report["data"].get(key), int):
            raise SpecError(f"report.data.{key} must be an integer")

    reps = report["spec"].get("reps")
    metrics = set(report["spec"].get("metrics", []))
    for position, row in enumerate(report["results"]):
        if not isinstance(row, dict):
            raise SpecError(f"results[{position}] must be an object")
        for key, expected_type, constraint in RESULT_SCHEMA:
            if key not in row:
                raise SpecError(f"results[{position}] is missing {key!r}")
            value = row[key]
            if not isinstance(value, expected_type) or isinstance(value, bool):
                raise SpecError(f"invalid type for results[{position}].{key}: got {type(value).__name__}")
            if constraint is not None:
                if isinstance(constraint, list):
                    if value not in constraint:
                        raise SpecError(f"invalid value for results[{position}].{key}: {value}")
                elif not constraint(value):
                    raise SpecError(f"invalid value for results[{position}].{key}: {value}")
        if isinstance(reps, int) and row["successes"] + row["failure_count"] != reps:
            counted = row["successes"] + row["failure_count"]
            raise SpecError(f"results[{position}] accounts for {counted} of {reps} reps")
        for metric in metrics & {"mse", "est_mse", "coverage", "accuracy", "auc"}:
            if metric == "est_mse" and row["method"] in ("lcc", "bootstrap_full"):
                continue
            if metric == "coverage" and row["method"] in ("lcc", "bootstrap_full"):
                continue
            if row["successes"] > 0 and row[metric] is None and metric != "auc":
                raise SpecError(f"results[{position}] lacks requested metric {metric!r}")
        if "timing" in metrics and row["timing"] is None:
            raise SpecError(f"results[{position}] lacks requested metric 'timing'")
