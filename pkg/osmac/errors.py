"""Exception hierarchy for data, estimation, spec and configuration failures."""


class OsmacError(Exception):
    """Base class for every error raised by osmac."""


# Data / schema errors


class DataError(OsmacError, ValueError):
    """Invalid input data or sampling plan."""


class ParseError(DataError):
    """Malformed input file. ``row`` is the 1-based file line, when known."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class SchemaError(DataError):
    """Input parsed but violates the Dataset schema (e.g. non-binary response)."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class DegenerateClassesError(DataError):
    """One response class is empty."""


class WrongSchemeError(DataError):
    """Plan scheme does not match the requested sampling procedure."""


class NotNormalizedError(DataError):
    """Replacement plan does not sum to one."""


# Estimation errors


class EstimationError(OsmacError, ArithmeticError):
    """A fit or plan could not be computed for the given sample."""


class SeparationError(EstimationError):
    """The classes are separated; no finite MLE exists."""


class SingularHessianError(EstimationError):
    """Negative Hessian is not positive definite (collinear covariates in the sample)."""


class SingularMxError(EstimationError):
    """M_X cannot be factorized."""


class SingularMxHatError(EstimationError):
    """Subsample estimate of M_X cannot be factorized."""


class ZeroMassError(EstimationError):
    """Every unnormalized plan weight is zero."""


class DivisionByZeroMassError(EstimationError):
    """A zero-probability row carries a nonzero residual."""


class PilotSeparationError(EstimationError):
    """The step-1 pilot fit failed. ``attempts`` counts the pilot draws tried."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class EmptyAcceptanceError(EstimationError):
    """Poisson acceptance selected no rows."""


# Spec / configuration errors


class SpecError(OsmacError, ValueError):
    """Invalid experiment specification."""


class ConfigError(OsmacError, ValueError):
    """Invalid configuration file."""
