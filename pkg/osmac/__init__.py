"""
OSMAC: optimal subsampling for logistic regression.

Library and CLI for estimating logistic-regression coefficients on large
datasets from A-/L-optimal subsamples, with subsample-only standard errors
and a Monte-Carlo experiment harness.
"""

__version__ = "1.0.0"

# Numerical tolerances shared across modules.
#   normalization: |sum(pi) - 1| allowed for replacement plans
#   psd:           min eigenvalue >= -psd * trace for PSD checks
#   singular:      squared Cholesky pivot ratio below which a matrix is treated as singular
TOLERANCES = {"normalization": 1e-12, "psd": 1e-10, "singular": 1e-13}

from osmac.datamodel import (  # noqa: E402
    Dataset,
    FitResult,
    SamplingPlan,
    Scheme,
    Step,
    Subsample,
    class_counts,
    load_csv,
)
from osmac.errors import EstimationError, OsmacError  # noqa: E402
from osmac.estimators import (  # noqa: E402
    TwoStepConfig,
    VarianceEstimate,
    algorithm1_estimate,
    estimate_variance,
    lcc_estimate,
    two_step_estimate,
)
from osmac.glm import SolverConfig, newton_mle  # noqa: E402
from osmac.sampler import Rng  # noqa: E402

__all__ = [
    "TOLERANCES",
    "Dataset",
    "EstimationError",
    "FitResult",
    "OsmacError",
    "Rng",
    "SamplingPlan",
    "Scheme",
    "SolverConfig",
    "Step",
    "Subsample",
    "TwoStepConfig",
    "VarianceEstimate",
    "algorithm1_estimate",
    "class_counts",
    "estimate_variance",
    "lcc_estimate",
    "load_csv",
    "newton_mle",
    "two_step_estimate",
]
