"""
Subsampling probabilities (SSPs).

Replacement plans: uniform, proportional case-control, and the two optimal
families

    mMSE:  pi_i ∝ |y_i - p_i| * ||M_X^{-1} x_i||     (minimizes tr(V))
    mVc:   pi_i ∝ |y_i - p_i| * ||x_i||             (minimizes tr(V_c))

plus LCC acceptance probabilities |y_i - p_i| for Poisson sampling.
``amse_trace`` evaluates the trace criteria either family minimizes.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.linalg import cho_solve
from scipy.special import expit

from osmac import TOLERANCES
from osmac.datamodel import Dataset, SamplingPlan, Scheme, Subsample, class_counts
from osmac.errors import DataError, DegenerateClassesError, DivisionByZeroMassError, SingularMxError, ZeroMassError
from osmac.glm import factorize_spd

logger = logging.getLogger(__name__)


class TraceMode(enum.Enum):
    TRACE_V = "trace_v"
    TRACE_VC = "trace_vc"


@dataclass(frozen=True)
class MxMatrix:
    """M_X = n^{-1} sum_i p_i(1 - p_i) x_i x_i^T at a given beta (symmetric PSD)."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DataError(f"M_X must be square, got shape {m.shape}")
        m = (m + m.T) / 2
        m.flags.writeable = False
        object.__setattr__(self, "m", m)

    @property
    def d(self) -> int:
        return self.m.shape[0]

    def is_psd(self) -> bool:
        trace = float(np.trace(self.m))
        return float(np.linalg.eigvalsh(self.m).min()) >= -TOLERANCES["psd"] * max(trace, 1.0)

    def factorize(self):
        """Cholesky factor of M_X; raises SingularMxError when it is not positive definite."""
        factor = factorize_spd(self.m)
        if factor is None:
            raise SingularMxError("M_X is singular or not positive definite")
        return factor


def _residuals(data: Dataset, beta: np.ndarray) -> np.ndarray:
    return np.abs(data.y - expit(data.x @ np.asarray(beta, dtype=np.float64)))


def _row_norms(rows: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", rows, rows))


def _apply_floor(pi: np.ndarray, floor: float) -> np.ndarray:
    if floor <= 0:
        return pi
    if floor >= 1:
        raise ValueError(f"probability floor must be in [0, 1), got {floor}")
    return (1.0 - floor) * pi + floor / pi.shape[0]


def _normalized_plan(weights: np.ndarray, scheme: Scheme, beta: np.ndarray, floor: float) -> SamplingPlan:
    total = float(np.sum(weights))
    if not total > 0:
        raise ZeroMassError(f"every {scheme.value} weight is zero; the plan cannot be normalized")
    pi = _apply_floor(weights / total, floor)
    return SamplingPlan(pi, scheme, pilot=np.asarray(beta, dtype=np.float64))


def compute_mx(data: Dataset, beta: np.ndarray) -> MxMatrix:
    """Exact full-data M_X at ``beta``; O(n d^2)."""
    p = expit(data.x @ np.asarray(beta, dtype=np.float64))
    weights = p * (1.0 - p)
    return MxMatrix((data.x.T * weights) @ data.x / data.n)


def mx_from_subsample(subsample: Subsample, data: Dataset, beta: np.ndarray) -> MxMatrix:
    """Pilot estimate (n r0)^{-1} sum_i w_i* x_i* x_i*^T / pi_i* from the step-1 rows only; O(r0 d^2)."""
    subsample.check_bounds(data.n)
    x = data.x[subsample.indices]
    p = expit(x @ np.asarray(beta, dtype=np.float64))
    weights = p * (1.0 - p) / subsample.probs
    return MxMatrix((x.T * weights) @ x / (data.n * len(subsample)))


def ssp_uniform(n: int) -> SamplingPlan:
    """pi_i = 1/n."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return SamplingPlan(np.full(n, 1.0 / n), Scheme.UNIFORM)


def ssp_case_control(data: Dataset) -> SamplingPlan:
    """pi_i = 1/(2 n0) for y_i = 0 and 1/(2 n1) for y_i = 1, so each class gets total mass 1/2."""
    n0, n1 = class_counts(data)
    if n0 == 0 or n1 == 0:
        raise DegenerateClassesError(f"case-control sampling needs both classes, got n0={n0}, n1={n1}")
    pi = np.where(data.y == 1, 1.0 / (2 * n1), 1.0 / (2 * n0))
    return SamplingPlan(pi, Scheme.CASE_CONTROL)


def ssp_mvc(data: Dataset, beta: np.ndarray, floor: float = 0.0) -> SamplingPlan:
    """mVc plan at pilot ``beta``; O(n d)."""
    weights = _residuals(data, beta) * _row_norms(data.x)
    plan = _normalized_plan(weights, Scheme.MVC, beta, floor)
    logger.debug("mVc plan: n=%d max pi=%.3e", plan.n, float(plan.pi.max()))
    return plan


def ssp_mmse(data: Dataset, beta: np.ndarray, mx: MxMatrix, floor: float = 0.0) -> SamplingPlan:
    """
    mMSE plan at pilot ``beta``; O(n d^2).

    M_X^{-1} comes from one Cholesky factorization of ``mx``; the rows are
    transformed by a single matrix product.
    """
    inverse = cho_solve(mx.factorize(), np.eye(mx.d), check_finite=False)
    transformed = data.x @ ((inverse + inverse.T) / 2)
    weights = _residuals(data, beta) * _row_norms(transformed)
    plan = _normalized_plan(weights, Scheme.MMSE, beta, floor)
    logger.debug("mMSE plan: n=%d max pi=%.3e", plan.n, float(plan.pi.max()))
    return plan


def ssp_lcc_acceptance(data: Dataset, beta: np.ndarray) -> SamplingPlan:
    """Local case-control acceptance probabilities |y_i - p_i(beta)|, not normalized."""
    return SamplingPlan(_residuals(data, beta), Scheme.LCC_ACCEPTANCE, pilot=np.asarray(beta, dtype=np.float64))


def amse_trace(
    data: Dataset,
    plan: SamplingPlan,
    beta: np.ndarray,
    mx: MxMatrix | None,
    r: int,
    mode: TraceMode = TraceMode.TRACE_V,
) -> float:
    """
    Trace of the asymptotic variance of the subsample estimator for ``plan``.

        TRACE_VC: tr(V_c) = (r n^2)^{-1} sum_i (y_i - p_i)^2 ||x_i||^2 / pi_i
        TRACE_V:  tr(V)   = (r n^2)^{-1} sum_i (y_i - p_i)^2 ||M_X^{-1} x_i||^2 / pi_i

    Rows with zero residual contribute nothing, whatever their probability.

    Raises
    ------
    DivisionByZeroMassError
        Some row has pi_i = 0 but a nonzero residual.
    """
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    residuals = _residuals(data, beta)
    if mode is TraceMode.TRACE_V:
        if mx is None:
            raise ValueError("TRACE_V needs M_X")
        rows = np.ascontiguousarray(cho_solve(mx.factorize(), data.x.T, check_finite=False).T)
    else:
        rows = data.x
    numerator = residuals**2 * np.einsum("ij,ij->i", rows, rows)

    active = numerator > 0
    if np.any(active & (plan.pi <= 0)):
        bad = int(np.flatnonzero(active & (plan.pi <= 0))[0])
        raise DivisionByZeroMassError(f"row {bad} has probability 0 but a nonzero residual")
    total = float(np.sum(numerator[active] / plan.pi[active]))
    return total / (r * data.n**2)


def write_plan_csv(plan: SamplingPlan, path: str | Path) -> None:
    """Dump a plan as (index, pi) rows."""
    frame = pd.DataFrame({"index": np.arange(plan.n), "pi": plan.pi})
    frame.to_csv(path, index=False, float_format="%.17g")
