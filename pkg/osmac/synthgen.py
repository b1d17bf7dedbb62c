"""
Synthetic logistic-regression data.

Six covariate designs with d = 7 and beta_true = 0.5 * ones(7), no intercept:

    mzNormal   N(0, S)                 S_ij = 0.5 ** (i != j)
    nzNormal   N(1.5, S)               about 95% ones
    ueNormal   N(0, D S D)             D = diag(1, ..., 7), so var(x_j) = j^2
    mixNormal  0.5 N(1, S) + 0.5 N(-1, S)
    T3         t_3(0, S) / 10
    EXP        iid exponential, rate 2 about 84% ones

plus two rare-event designs: RareNormalMean (nzNormal with mean mu) and
RareUnivariate (intercept beta0 plus one standard normal covariate, beta1 = 1).
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from osmac.datamodel import Dataset
from osmac.sampler import Rng

logger = logging.getLogger(__name__)

MAIN_DIMENSION = 7
MAIN_BETA = 0.5
T_DEGREES_OF_FREEDOM = 3
T_SCALE = 10.0
EXP_RATE = 2.0


class ScenarioKind(enum.Enum):
    MZ_NORMAL = "mzNormal"
    NZ_NORMAL = "nzNormal"
    UE_NORMAL = "ueNormal"
    MIX_NORMAL = "mixNormal"
    T3 = "T3"
    EXP = "EXP"
    RARE_NORMAL_MEAN = "RareNormalMean"
    RARE_UNIVARIATE = "RareUnivariate"


@dataclass(frozen=True)
class Scenario:
    """
    A data-generating design.

    Parameters
    ----------
    kind : ScenarioKind
    n : int
        Rows to generate.
    beta_true : ndarray
        Coefficients of the logistic model; length 7, or 2 for RareUnivariate.
    mean : float, optional
        Covariate mean for RareNormalMean.
    """

    kind: ScenarioKind
    n: int
    beta_true: np.ndarray
    mean: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        beta = np.array(self.beta_true, dtype=np.float64).reshape(-1)
        expected = 2 if self.kind is ScenarioKind.RARE_UNIVARIATE else MAIN_DIMENSION
        if beta.shape[0] != expected:
            raise ValueError(f"{self.kind.value} needs {expected} coefficients, got {beta.shape[0]}")
        if self.kind is ScenarioKind.RARE_NORMAL_MEAN and self.mean is None:
            raise ValueError("RareNormalMean needs a covariate mean")
        beta.flags.writeable = False
        object.__setattr__(self, "beta_true", beta)

    @property
    def d(self) -> int:
        return self.beta_true.shape[0]

    def with_n(self, n: int) -> Scenario:
        return Scenario(self.kind, n, self.beta_true, self.mean)


def _main(kind: ScenarioKind, n: int, mean: float | None = None) -> Scenario:
    return Scenario(kind, n, np.full(MAIN_DIMENSION, MAIN_BETA), mean)


def _rare_univariate(beta0: float):
    return lambda n: Scenario(ScenarioKind.RARE_UNIVARIATE, n, np.array([beta0, 1.0]))


PRESETS = {
    "mznormal": lambda n: _main(ScenarioKind.MZ_NORMAL, n),
    "nznormal": lambda n: _main(ScenarioKind.NZ_NORMAL, n),
    "uenormal": lambda n: _main(ScenarioKind.UE_NORMAL, n),
    "mixnormal": lambda n: _main(ScenarioKind.MIX_NORMAL, n),
    "t3": lambda n: _main(ScenarioKind.T3, n),
    "exp": lambda n: _main(ScenarioKind.EXP, n),
    "rare214": lambda n: _main(ScenarioKind.RARE_NORMAL_MEAN, n, -2.14),
    "rare29": lambda n: _main(ScenarioKind.RARE_NORMAL_MEAN, n, -2.9),
    "king7": _rare_univariate(-7.0),
    "king95": _rare_univariate(-9.5),
    "king125": _rare_univariate(-12.5),
    "king135": _rare_univariate(-13.5),
}


def scenario_names() -> list[str]:
    return sorted(PRESETS)


def scenario(name: str, n: int = 10_000) -> Scenario:
    """Look up a preset by name, case-insensitively (e.g. "mzNormal", "rare29", "king135")."""
    try:
        factory = PRESETS[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose one of {', '.join(scenario_names())}") from None
    return factory(n)


def equicorrelation(d: int, rho: float = 0.5) -> np.ndarray:
    """S_ij = rho ** (i != j)."""
    return np.where(np.eye(d, dtype=bool), 1.0, rho)


def _correlated_normal(rng: Rng, n: int, covariance: np.ndarray) -> np.ndarray:
    factor = np.linalg.cholesky(covariance)
    return rng.standard_normal(size=(n, covariance.shape[0])) @ factor.T


def _covariates(scn: Scenario, rng: Rng) -> np.ndarray:
    n, d = scn.n, MAIN_DIMENSION
    sigma = equicorrelation(d)
    kind = scn.kind
    if kind is ScenarioKind.MZ_NORMAL:
        return _correlated_normal(rng, n, sigma)
    if kind is ScenarioKind.NZ_NORMAL:
        return 1.5 + _correlated_normal(rng, n, sigma)
    if kind is ScenarioKind.RARE_NORMAL_MEAN:
        return scn.mean + _correlated_normal(rng, n, sigma)
    if kind is ScenarioKind.UE_NORMAL:
        scale = np.diag(np.arange(1.0, d + 1))
        return _correlated_normal(rng, n, scale @ sigma @ scale)
    if kind is ScenarioKind.MIX_NORMAL:
        z = _correlated_normal(rng, n, sigma)
        signs = np.where(rng.uniform01(size=n) < 0.5, 1.0, -1.0)
        return z + signs[:, None]
    if kind is ScenarioKind.T3:
        # one chi-square per row
        z = _correlated_normal(rng, n, sigma)
        w = rng.chi_square(T_DEGREES_OF_FREEDOM, size=n)
        return z / np.sqrt(w / T_DEGREES_OF_FREEDOM)[:, None] / T_SCALE
    if kind is ScenarioKind.EXP:
        return rng.exponential(EXP_RATE, size=(n, d))
    z = rng.standard_normal(size=n)
    return np.column_stack([np.ones(n), z])


def generate(scn: Scenario, rng: Rng) -> Dataset:
    """
    Draw one replicate (x, y) with y_i ~ Bernoulli(p_i(beta_true)).

    Identical (seed, stream) always gives the identical Dataset.
    """
    x = _covariates(scn, rng)
    eta = x @ scn.beta_true
    y = (rng.uniform01(size=scn.n) < expit(eta)).astype(np.uint8)
    if scn.kind is ScenarioKind.RARE_UNIVARIATE:
        names = ("intercept", "x1")
    else:
        names = tuple(f"x{j}" for j in range(1, MAIN_DIMENSION + 1))
    logger.debug("generated %s: n=%d ones=%d", scn.kind.value, scn.n, int(y.sum()))
    return Dataset(x, y, feature_names=names)
