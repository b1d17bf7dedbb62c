"""
Logistic model primitives and the weighted Newton MLE solver.

The same solver serves the full-data fit (unit weights) and every subsample
fit (weights 1/pi*). Weighted log-likelihood:

    l(beta) = sum_i w_i * [y_i * eta_i - log(1 + exp(eta_i))],   eta_i = x_i^T beta
"""

from __future__ import annotations

import logging
import warnings
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import expit

from osmac import TOLERANCES
from osmac.datamodel import Dataset, FitResult, Subsample
from osmac.errors import DataError, SeparationError, SingularHessianError

logger = logging.getLogger(__name__)

# |x_i^T beta| beyond which fitted probabilities are saturated
ETA_SATURATION = 30.0


@dataclass(frozen=True)
class SolverConfig:
    """
    Newton solver settings.

    Parameters
    ----------
    tol : float
        Relative-step tolerance ||b(t+1) - b(t)|| / max(1, ||b(t)||) (default: 1e-8).
    max_iter : int
        Iteration cap (default: 100).
    divergence_norm : float
        ||beta|| above which the fit is declared separated (default: 1e8).
    """

    tol: float = 1e-8
    max_iter: int = 100
    divergence_norm: float = 1e8

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.divergence_norm > 0:
            raise ValueError(f"divergence_norm must be positive, got {self.divergence_norm}")


@dataclass(frozen=True)
class WeightedSample:
    """Rows (x, y) with one positive weight each: 1/pi* for weighted fits, ones otherwise."""

    x: np.ndarray
    y: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if x.ndim != 2 or x.shape[0] != y.shape[0] or weights.shape[0] != y.shape[0]:
            raise DataError(f"shape mismatch: x {x.shape}, y {y.shape}, weights {weights.shape}")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise DataError("weights must be positive and finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "weights", weights)

    @property
    def m(self) -> int:
        return self.x.shape[0]

    @classmethod
    def from_dataset(cls, data: Dataset, weights: np.ndarray | None = None) -> WeightedSample:
        if weights is None:
            weights = np.ones(data.n)
        return cls(data.x, data.y, weights)

    @classmethod
    def from_subsample(cls, data: Dataset, subsample: Subsample, weighted: bool = True) -> WeightedSample:
        """Rows of ``data`` selected by ``subsample``, weighted by 1/pi* unless ``weighted`` is False."""
        subsample.check_bounds(data.n)
        weights = 1.0 / subsample.probs if weighted else np.ones(len(subsample))
        return cls(data.x[subsample.indices], data.y[subsample.indices], weights)


def sigmoid(eta):
    """Logistic function exp(eta) / (1 + exp(eta)), stable for large |eta|."""
    result = expit(eta)
    return float(result) if np.ndim(result) == 0 else result


def loglik(sample: WeightedSample, beta: np.ndarray) -> float:
    """Weighted log-likelihood, evaluated as y*eta - log1p(exp(eta)) via logaddexp."""
    eta = sample.x @ np.asarray(beta, dtype=np.float64)
    terms = sample.y * eta - np.logaddexp(0.0, eta)
    return float(np.dot(sample.weights, terms))


def score_and_hessian(sample: WeightedSample, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Gradient and negative Hessian of the weighted log-likelihood.

    Returns
    -------
    gradient : ndarray, shape (d,)
        sum_i w_i (y_i - p_i) x_i
    neg_hessian : ndarray, shape (d, d)
        sum_i w_i p_i (1 - p_i) x_i x_i^T, symmetric PSD
    """
    beta = np.asarray(beta, dtype=np.float64)
    p = expit(sample.x @ beta)
    gradient = sample.x.T @ (sample.weights * (sample.y - p))
    neg_hessian = (sample.x.T * (sample.weights * p * (1.0 - p))) @ sample.x
    return gradient, (neg_hessian + neg_hessian.T) / 2


def factorize_spd(matrix: np.ndarray):
    """
    Cholesky factor of a symmetric positive-definite matrix, or None if it is
    not numerically positive definite.
    """
    try:
        factor = cho_factor(matrix, lower=True, check_finite=False)
    except LinAlgError:
        return None
    pivots = np.abs(np.diag(factor[0]))
    if not np.all(np.isfinite(pivots)) or pivots.min() ** 2 <= TOLERANCES["singular"] * pivots.max() ** 2:
        return None
    return factor


def check_separation(
    data: Dataset | WeightedSample,
    beta_path: Sequence[np.ndarray],
    cfg: SolverConfig | None = None,
) -> bool:
    """
    Heuristic check that no finite MLE exists.

    True when all responses are identical, when an iterate's norm exceeds
    ``cfg.divergence_norm``, or when the log-likelihood is still non-decreasing
    over the trailing iterates while max |x_i^T beta| exceeds the saturation level.

    Parameters
    ----------
    data : Dataset or WeightedSample
        Rows the iterates were fitted on.
    beta_path : sequence of ndarray
        Newton iterates, oldest first.
    cfg : SolverConfig, optional
        Supplies the divergence threshold.
    """
    cfg = cfg or SolverConfig()
    y = np.asarray(data.y)
    if y.size == 0 or y.min() == y.max():
        return True
    if len(beta_path) == 0:
        return False
    if max(float(np.linalg.norm(b)) for b in beta_path) > cfg.divergence_norm:
        return True
    if len(beta_path) < 2:
        return False

    sample = data if isinstance(data, WeightedSample) else WeightedSample.from_dataset(data)
    tail = beta_path[-5:]
    values = np.array([loglik(sample, b) for b in tail])
    increasing = bool(np.all(np.diff(values) >= 0))
    max_eta = float(np.max(np.abs(sample.x @ np.asarray(beta_path[-1]))))
    return increasing and max_eta > ETA_SATURATION


def newton_mle(
    sample: WeightedSample,
    init: np.ndarray | None = None,
    cfg: SolverConfig | None = None,
    raise_on_separation: bool = True,
) -> FitResult:
    """
    Maximize the weighted log-likelihood by Newton's method.

    Parameters
    ----------
    sample : WeightedSample
        Rows and weights.
    init : ndarray, optional
        Starting coefficients (default: zeros).
    cfg : SolverConfig, optional
        Stopping rule and divergence threshold.
    raise_on_separation : bool, optional
        Raise SeparationError on divergence (default). When False, return the
        last iterate with ``separation_detected=True`` instead.

    Returns
    -------
    FitResult
        ``converged`` is False (with a RuntimeWarning) when max_iter is hit
        without signs of separation.

    Raises
    ------
    SeparationError
        The iterates diverge: the classes are separated in this sample.
    SingularHessianError
        The negative Hessian cannot be factorized: collinear covariates, or
        every fitted probability saturated at the current iterate.
    """
    cfg = cfg or SolverConfig()
    d = sample.x.shape[1]
    beta = np.zeros(d) if init is None else np.array(init, dtype=np.float64).reshape(-1)
    if beta.shape[0] != d:
        raise DataError(f"init has {beta.shape[0]} entries, sample has {d} columns")

    def separated(message: str, iterations: int) -> FitResult:
        if raise_on_separation:
            raise SeparationError(message)
        logger.info("separation detected: %s", message)
        return FitResult(beta=beta, converged=False, iterations=iterations, separation_detected=True)

    path = [beta.copy()]
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iter + 1):
        gradient, neg_hessian = score_and_hessian(sample, beta)
        factor = factorize_spd(neg_hessian)
        if factor is None:
            if len(path) > 1 and check_separation(sample, path, cfg):
                return separated(f"iterates diverge at iteration {iterations}; classes are separated", iterations)
            rank = np.linalg.matrix_rank(neg_hessian)
            raise SingularHessianError(
                f"negative Hessian is singular at iteration {iterations} (rank {rank} of {d})"
            )

        step = cho_solve(factor, gradient, check_finite=False)
        new_beta = beta + step
        relative_step = float(np.linalg.norm(step)) / max(1.0, float(np.linalg.norm(beta)))
        beta = new_beta
        path.append(beta.copy())
        logger.debug("newton iteration %d: relative step %.3e", iterations, relative_step)

        if float(np.linalg.norm(beta)) > cfg.divergence_norm:
            return separated(f"||beta|| exceeded {cfg.divergence_norm:g}; classes are separated", iterations)
        if relative_step <= cfg.tol:
            converged = True
            break

    if not converged and check_separation(sample, path, cfg):
        return separated(
            f"no convergence in {cfg.max_iter} iterations with saturated fit; MLE does not exist", iterations
        )

    gradient, _ = score_and_hessian(sample, beta)
    if not converged:
        warnings.warn(f"Newton solver did not converge in {cfg.max_iter} iterations", RuntimeWarning, stacklevel=2)

    return FitResult(
        beta=beta,
        converged=converged,
        iterations=iterations,
        separation_detected=False,
        gradient_norm=float(np.linalg.norm(gradient)),
        loglik=loglik(sample, beta),
    )


def fit_full(data: Dataset, cfg: SolverConfig | None = None) -> FitResult:
    """Full-data MLE with its asymptotic variance (negative Hessian inverse) attached."""
    sample = WeightedSample.from_dataset(data)
    fit = newton_mle(sample, cfg=cfg)
    _, neg_hessian = score_and_hessian(sample, fit.beta)
    factor = factorize_spd(neg_hessian)
    if factor is None:
        return fit
    return fit.with_vcov(cho_solve(factor, np.eye(data.d), check_finite=False))
