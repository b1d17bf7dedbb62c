"""
Subsample estimators.

- ``algorithm1_estimate``: one draw of size r from a given plan, weighted MLE
  with weights 1/pi*.
- ``two_step_estimate``: pilot draw of size r0 (uniform or case-control),
  optimal plan (mMSE or mVc) at the pilot estimate, second draw of size r, and
  a weighted MLE on the pooled r0 + r rows started at the pilot estimate
  (restarted from zero if that start saturates).
- ``estimate_variance``: subsample-only sandwich estimate M^{-1} V_c M^{-1}.
- ``lcc_estimate``: local case-control baseline (Poisson acceptance, unweighted
  fit, pilot offset added back).
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import expit

from osmac.datamodel import Dataset, FitResult, SamplingPlan, Scheme, Step, Subsample, class_counts
from osmac.errors import (
    DataError,
    DegenerateClassesError,
    EmptyAcceptanceError,
    PilotSeparationError,
    SeparationError,
    SingularHessianError,
    SingularMxHatError,
    WrongSchemeError,
)
from osmac.glm import SolverConfig, WeightedSample, factorize_spd, newton_mle
from osmac.sampler import Rng, build_alias, draw_poisson, draw_with_replacement
from osmac.ssp import (
    compute_mx,
    mx_from_subsample,
    ssp_case_control,
    ssp_lcc_acceptance,
    ssp_mmse,
    ssp_mvc,
    ssp_uniform,
    write_plan_csv,
)

logger = logging.getLogger(__name__)


class MxSource(enum.Enum):
    """Where M_X for the mMSE plan is estimated."""

    FULL_DATA = "full_data"
    PILOT_SUBSAMPLE = "pilot_subsample"


@dataclass(frozen=True)
class TwoStepConfig:
    """
    Settings of the two-step procedure.

    Parameters
    ----------
    r0 : int
        Step-1 (pilot) subsample size.
    r : int
        Step-2 subsample size.
    pilot_scheme : Scheme
        UNIFORM or CASE_CONTROL (default: CASE_CONTROL).
    criterion : Scheme
        MMSE or MVC (default: MVC).
    mx_source : MxSource
        M_X estimate used by the mMSE plan (default: FULL_DATA).
    solver : SolverConfig
        Newton settings for both fits.
    floor : float
        Probability floor mixed into the optimal plan (default: 0, off).
    max_pilot_attempts : int
        Pilot draws tried before giving up with PilotSeparationError (default: 1).
    """

    r0: int
    r: int
    pilot_scheme: Scheme = Scheme.CASE_CONTROL
    criterion: Scheme = Scheme.MVC
    mx_source: MxSource = MxSource.FULL_DATA
    solver: SolverConfig = field(default_factory=SolverConfig)
    floor: float = 0.0
    max_pilot_attempts: int = 1

    def __post_init__(self):
        if self.r0 < 1 or self.r < 1:
            raise ValueError(f"r0 and r must be >= 1, got r0={self.r0}, r={self.r}")
        if self.pilot_scheme not in (Scheme.UNIFORM, Scheme.CASE_CONTROL):
            raise ValueError(f"pilot scheme must be uniform or case_control, got {self.pilot_scheme.value}")
        if self.criterion not in (Scheme.MMSE, Scheme.MVC):
            raise ValueError(f"criterion must be mmse or mvc, got {self.criterion.value}")
        if self.max_pilot_attempts < 1:
            raise ValueError("max_pilot_attempts must be >= 1")


@dataclass(frozen=True)
class VarianceEstimate:
    """Subsample-only variance: vcov = mx_hat^{-1} vc_hat mx_hat^{-1}."""

    vcov: np.ndarray
    mx_hat: np.ndarray
    vc_hat: np.ndarray

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.vcov), 0.0, None))


def _fit_subsample(
    data: Dataset,
    subsample: Subsample,
    solver: SolverConfig,
    init: np.ndarray | None = None,
    weighted: bool = True,
) -> FitResult:
    """
    Newton fit on the subsample rows.

    A fit started at a nonzero ``init`` that overshoots into saturation is
    restarted once from zero; the error propagates only if that fails too.
    """
    sample = WeightedSample.from_subsample(data, subsample, weighted=weighted)
    if init is None or not np.any(init):
        return newton_mle(sample, cfg=solver)
    try:
        return newton_mle(sample, init=init, cfg=solver)
    except (SeparationError, SingularHessianError) as exc:
        logger.debug("fit from the pilot estimate failed (%s); restarting from zero", exc)
    return newton_mle(sample, cfg=solver)


def algorithm1_estimate(
    data: Dataset,
    plan: SamplingPlan,
    r: int,
    rng: Rng,
    solver: SolverConfig | None = None,
    tag: Step = Step.STEP1,
) -> tuple[FitResult, Subsample]:
    """
    Draw r rows from ``plan`` with replacement and fit the 1/pi*-weighted MLE.

    Returns
    -------
    tuple of (FitResult, Subsample)
        The estimate and the rows it was fitted on.

    Raises
    ------
    SeparationError, SingularHessianError
        Propagated from the solver.
    """
    if not plan.scheme.with_replacement:
        raise WrongSchemeError(f"single-step estimation needs a replacement plan, got {plan.scheme.value}")
    solver = solver or SolverConfig()
    subsample = draw_with_replacement(build_alias(plan), plan, r, rng, tag)
    started = time.perf_counter()
    fit = _fit_subsample(data, subsample, solver)
    return fit.with_timings(solve=time.perf_counter() - started), subsample


def _pilot_plan(data: Dataset, scheme: Scheme) -> SamplingPlan:
    if scheme is Scheme.UNIFORM:
        return ssp_uniform(data.n)
    return ssp_case_control(data)


def fit_pilot(
    data: Dataset,
    scheme: Scheme,
    r0: int,
    rng: Rng,
    solver: SolverConfig,
    max_attempts: int = 1,
) -> tuple[FitResult, Subsample]:
    """
    Step 1: pilot estimate from ``r0`` rows of the uniform or case-control plan.

    Attempt k > 1 draws from the child stream ``rng.spawn(k)``.

    Raises
    ------
    PilotSeparationError
        Every attempt produced a sample without a finite MLE.
    """
    plan = _pilot_plan(data, scheme)
    table = build_alias(plan)
    last_error: Exception | None = None
    for attempt in range(1, max_attempts + 1):
        attempt_rng = rng if attempt == 1 else rng.spawn(attempt)
        subsample = draw_with_replacement(table, plan, r0, attempt_rng, Step.STEP1)
        try:
            return _fit_subsample(data, subsample, solver), subsample
        except (SeparationError, SingularHessianError) as exc:
            logger.debug("pilot attempt %d failed: %s", attempt, exc)
            last_error = exc
    raise PilotSeparationError(
        f"pilot MLE not found after {max_attempts} attempt(s): {last_error}", attempts=max_attempts
    ) from last_error


def two_step_estimate(
    data: Dataset,
    cfg: TwoStepConfig,
    rng: Rng,
    max_pilot_attempts: int | None = None,
    dump_ssp: str | Path | None = None,
) -> tuple[FitResult, VarianceEstimate]:
    """
    Two-step optimal subsampling estimate with its subsample-only variance.

    Step 1 fits the pilot on r0 rows. Step 2 builds the chosen optimal plan at
    the pilot estimate, draws r rows, pools them with the step-1 rows (each
    keeping the probability that drew it) and refits from the pilot estimate.
    ``max_pilot_attempts`` overrides the value in ``cfg``. The step-2 plan is
    written to ``dump_ssp`` when given.

    Returns
    -------
    tuple of (FitResult, VarianceEstimate)
        The pooled estimate, with ``vcov``/``se`` and "ssp"/"solve" timings
        attached, and its variance components.

    Raises
    ------
    PilotSeparationError
        Step-1 MLE not found.
    SeparationError, SingularHessianError, SingularMxError, ZeroMassError, SingularMxHatError
        Step-2 failures.
    """
    started = time.perf_counter()
    attempts = cfg.max_pilot_attempts if max_pilot_attempts is None else max_pilot_attempts
    pilot_fit, pilot_sub = fit_pilot(data, cfg.pilot_scheme, cfg.r0, rng, cfg.solver, attempts)
    pilot_beta = pilot_fit.beta
    pilot_seconds = time.perf_counter() - started

    started = time.perf_counter()
    if cfg.criterion is Scheme.MVC:
        plan = ssp_mvc(data, pilot_beta, floor=cfg.floor)
    else:
        if cfg.mx_source is MxSource.FULL_DATA:
            mx = compute_mx(data, pilot_beta)
        else:
            mx = mx_from_subsample(pilot_sub, data, pilot_beta)
        plan = ssp_mmse(data, pilot_beta, mx, floor=cfg.floor)
    ssp_seconds = time.perf_counter() - started
    if dump_ssp is not None:
        write_plan_csv(plan, dump_ssp)

    second = draw_with_replacement(build_alias(plan), plan, cfg.r, rng, Step.STEP2)
    pooled = pilot_sub.pool(second)

    started = time.perf_counter()
    fit = _fit_subsample(data, pooled, cfg.solver, init=pilot_beta)
    solve_seconds = time.perf_counter() - started

    variance = estimate_variance(pooled, data, fit.beta)
    logger.debug("two-step %s: r0=%d r=%d iterations=%d", cfg.criterion.value, cfg.r0, cfg.r, fit.iterations)
    fit = fit.with_vcov(variance.vcov).with_timings(pilot=pilot_seconds, ssp=ssp_seconds, solve=solve_seconds)
    return fit, variance


def estimate_variance(subsample: Subsample, data: Dataset, beta: np.ndarray) -> VarianceEstimate:
    """
    Sandwich variance of a subsample estimate, from the subsample alone.

        mx_hat = (n m)^{-1}     sum_i w_i*(beta) x_i* x_i*^T / pi_i*
        vc_hat = (n^2 m^2)^{-1} sum_i (y_i* - p_i*(beta))^2 x_i* x_i*^T / pi_i*^2
        vcov   = mx_hat^{-1} vc_hat mx_hat^{-1}

    where m is the number of pooled rows.

    Raises
    ------
    SingularMxHatError
        mx_hat is not positive definite.
    """
    m = len(subsample)
    if m == 0:
        raise DataError("cannot estimate a variance from an empty subsample")
    subsample.check_bounds(data.n)
    n = data.n
    x = data.x[subsample.indices]
    y = data.y[subsample.indices]
    probs = subsample.probs
    p = expit(x @ np.asarray(beta, dtype=np.float64))

    mx_hat = (x.T * (p * (1.0 - p) / probs)) @ x / (n * m)
    vc_hat = (x.T * ((y - p) ** 2 / probs**2)) @ x / (n**2 * m**2)
    mx_hat = (mx_hat + mx_hat.T) / 2
    vc_hat = (vc_hat + vc_hat.T) / 2

    factor = factorize_spd(mx_hat)
    if factor is None:
        raise SingularMxHatError("subsample estimate of M_X is singular")
    inverse = cho_solve(factor, np.eye(x.shape[1]), check_finite=False)
    vcov = inverse @ vc_hat @ inverse
    return VarianceEstimate(vcov=(vcov + vcov.T) / 2, mx_hat=mx_hat, vc_hat=vc_hat)


def scale_acceptance(acceptance: np.ndarray, expected_size: float) -> np.ndarray:
    """
    Scale acceptance probabilities by c so that sum_i min(1, c a_i) equals ``expected_size``.

    Rows with a_i = 0 stay at 0. When fewer positive rows exist than requested,
    every positive row is accepted.
    """
    positive = acceptance > 0
    if expected_size >= np.count_nonzero(positive):
        return np.where(positive, 1.0, 0.0)
    capped = np.zeros_like(positive)
    for _ in range(acceptance.shape[0] + 1):
        free_mass = float(np.sum(acceptance[positive & ~capped]))
        scale = (expected_size - np.count_nonzero(capped)) / free_mass
        now_capped = positive & (scale * acceptance >= 1.0)
        if np.array_equal(now_capped, capped):
            break
        capped = now_capped
    return np.minimum(1.0, scale * acceptance)


def lcc_estimate(
    data: Dataset,
    r0: int,
    rng: Rng,
    solver: SolverConfig | None = None,
    r: int | None = None,
    dump_ssp: str | Path | None = None,
    max_pilot_attempts: int = 1,
) -> FitResult:
    """
    Local case-control estimate.

    A case-control pilot of size r0 gives beta0; rows are Poisson-accepted with
    probability |y_i - p_i(beta0)| (scaled to expected size ``r`` when given);
    the unweighted MLE on accepted rows is shifted by beta0. The pilot rows
    are not reused. The acceptance plan is written to ``dump_ssp`` when given.
    The pilot is redrawn up to ``max_pilot_attempts`` times, as in
    ``fit_pilot``.

    Raises
    ------
    DegenerateClassesError
        One class is empty.
    PilotSeparationError
        Pilot MLE not found.
    EmptyAcceptanceError
        No row was accepted.
    """
    solver = solver or SolverConfig()
    n0, n1 = class_counts(data)
    if n0 == 0 or n1 == 0:
        raise DegenerateClassesError(f"LCC needs both classes, got n0={n0}, n1={n1}")

    pilot_fit, _ = fit_pilot(data, Scheme.CASE_CONTROL, r0, rng, solver, max_pilot_attempts)
    pilot_beta = pilot_fit.beta

    started = time.perf_counter()
    plan = ssp_lcc_acceptance(data, pilot_beta)
    if r is not None:
        plan = SamplingPlan(scale_acceptance(plan.pi, r), Scheme.LCC_ACCEPTANCE, pilot=pilot_beta)
    ssp_seconds = time.perf_counter() - started
    if dump_ssp is not None:
        write_plan_csv(plan, dump_ssp)

    accepted = draw_poisson(plan, rng)
    if len(accepted) == 0:
        raise EmptyAcceptanceError("LCC acceptance sampling selected no rows")

    started = time.perf_counter()
    fit = _fit_subsample(data, accepted, solver, weighted=False)
    solve_seconds = time.perf_counter() - started
    logger.debug("lcc: accepted %d rows", len(accepted))

    return FitResult(
        beta=pilot_beta + fit.beta,
        converged=fit.converged,
        iterations=fit.iterations,
        gradient_norm=fit.gradient_norm,
        loglik=fit.loglik,
        timings={"ssp": ssp_seconds, "solve": solve_seconds},
    )
