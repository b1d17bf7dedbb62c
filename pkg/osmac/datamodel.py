"""
Immutable data containers shared by every module, plus CSV and binary I/O.

Dataset holds the full data (x, y). SamplingPlan holds a probability vector
over its rows, Subsample the rows drawn from a plan, FitResult a coefficient
estimate with its diagnostics.
"""

from __future__ import annotations

import enum
import logging
import re
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd

from osmac import TOLERANCES
from osmac.errors import DataError, NotNormalizedError, ParseError, SchemaError

if TYPE_CHECKING:
    from osmac.sampler import Rng

logger = logging.getLogger(__name__)

BINARY_MAGIC = b"OSMC1"


def _frozen_array(values, dtype) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.flags.writeable = False
    return array


class Scheme(enum.Enum):
    """Subsampling scheme that produced a plan."""

    UNIFORM = "uniform"
    CASE_CONTROL = "case_control"
    MMSE = "mmse"
    MVC = "mvc"
    LCC_ACCEPTANCE = "lcc_acceptance"

    @property
    def with_replacement(self) -> bool:
        return self is not Scheme.LCC_ACCEPTANCE


class Step(enum.IntEnum):
    """Which step of the two-step procedure drew a row."""

    STEP1 = 1
    STEP2 = 2


@dataclass(frozen=True)
class Dataset:
    """
    Full data: an n x d covariate matrix and a binary response vector.

    Parameters
    ----------
    x : array_like
        Covariates, n rows by d columns. Column 0 is the intercept when one was added.
    y : array_like
        Responses in {0, 1}.
    feature_names : sequence of str, optional
        Column labels for x, used when writing CSV.
    """

    x: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        y = np.asarray(self.y).reshape(-1)

        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise DataError(f"x must be a non-empty 2-d matrix, got shape {x.shape}")
        if y.shape[0] != x.shape[0]:
            raise DataError(f"x has {x.shape[0]} rows but y has {y.shape[0]} entries")
        if not np.all(np.isfinite(x)):
            raise DataError("x contains non-finite entries")
        if not np.all((y == 0) | (y == 1)):
            bad = int(np.flatnonzero((y != 0) & (y != 1))[0])
            raise SchemaError(f"response at row index {bad} is {y[bad]!r}, expected 0 or 1", row=bad)
        if self.feature_names is not None and len(self.feature_names) != x.shape[1]:
            raise DataError(f"{len(self.feature_names)} feature names given for {x.shape[1]} columns")

        object.__setattr__(self, "x", _frozen_array(x, np.float64))
        object.__setattr__(self, "y", _frozen_array(y, np.uint8))
        if self.feature_names is not None:
            object.__setattr__(self, "feature_names", tuple(str(name) for name in self.feature_names))

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def take(self, indices: Sequence[int] | np.ndarray) -> Dataset:
        """Return the rows at ``indices`` (repetition allowed) as a new Dataset."""
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.x[indices], self.y[indices], self.feature_names)

    def split(self, fraction: float, rng: Rng) -> tuple[Dataset, Dataset]:
        """
        Randomly split into (train, validation) with ``fraction`` of rows held out.

        Parameters
        ----------
        fraction : float
            Share of rows in the validation part, in (0, 1).
        rng : Rng
            Source of the permutation.

        Returns
        -------
        tuple of Dataset
            (train, validation)
        """
        if not 0 < fraction < 1:
            raise DataError(f"split fraction must be in (0, 1), got {fraction}")
        n_valid = int(round(self.n * fraction))
        if n_valid < 1 or n_valid >= self.n:
            raise DataError(f"split fraction {fraction} leaves an empty part for n={self.n}")
        order = rng.permutation(self.n)
        return self.take(np.sort(order[n_valid:])), self.take(np.sort(order[:n_valid]))


@dataclass(frozen=True)
class SamplingPlan:
    """
    Probability vector over the rows of a Dataset.

    Replacement schemes sum to one; LCC acceptance plans hold per-row Poisson
    acceptance probabilities in [0, 1].
    """

    pi: np.ndarray
    scheme: Scheme
    pilot: np.ndarray | None = None

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=np.float64).reshape(-1)
        if pi.size < 1:
            raise DataError("sampling plan is empty")
        if not np.all(np.isfinite(pi)) or np.any(pi < 0):
            raise DataError(f"{self.scheme.value} plan has negative or non-finite entries")
        if self.scheme.with_replacement:
            total = float(np.sum(pi))
            if abs(total - 1.0) > TOLERANCES["normalization"]:
                raise NotNormalizedError(f"{self.scheme.value} plan sums to {total!r}, expected 1")
        elif np.any(pi > 1):
            raise DataError("acceptance probabilities must lie in [0, 1]")

        object.__setattr__(self, "pi", _frozen_array(pi, np.float64))
        if self.pilot is not None:
            object.__setattr__(self, "pilot", _frozen_array(self.pilot, np.float64))

    @property
    def n(self) -> int:
        return self.pi.shape[0]


@dataclass(frozen=True)
class Subsample:
    """Row indices drawn from a plan, with the probability and step that drew each."""

    indices: np.ndarray
    probs: np.ndarray
    step_tag: np.ndarray

    def __post_init__(self):
        indices = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        probs = np.asarray(self.probs, dtype=np.float64).reshape(-1)
        step_tag = np.asarray(self.step_tag, dtype=np.uint8).reshape(-1)
        if not indices.shape == probs.shape == step_tag.shape:
            raise DataError(
                f"subsample fields differ in length: {indices.size} indices, "
                f"{probs.size} probs, {step_tag.size} tags"
            )
        if np.any(probs <= 0):
            raise DataError("subsample contains a row drawn with probability <= 0")
        if np.any(indices < 0):
            raise DataError("subsample contains a negative row index")
        object.__setattr__(self, "indices", _frozen_array(indices, np.int64))
        object.__setattr__(self, "probs", _frozen_array(probs, np.float64))
        object.__setattr__(self, "step_tag", _frozen_array(step_tag, np.uint8))

    def __len__(self) -> int:
        return self.indices.shape[0]

    def check_bounds(self, n: int) -> None:
        """Raise DataError unless every index lies in [0, n)."""
        if len(self) and int(self.indices.max()) >= n:
            raise DataError(f"subsample index {int(self.indices.max())} out of range for n={n}")

    def pool(self, other: Subsample) -> Subsample:
        """Concatenate two subsamples, keeping each row's own probability and tag."""
        return Subsample(
            np.concatenate([self.indices, other.indices]),
            np.concatenate([self.probs, other.probs]),
            np.concatenate([self.step_tag, other.step_tag]),
        )


@dataclass(frozen=True)
class FitResult:
    """
    Coefficient estimate plus solver diagnostics.

    ``vcov`` and ``se`` are filled by variance estimation; ``timings`` holds
    wall-clock seconds per phase ("ssp", "solve").
    """

    beta: np.ndarray
    converged: bool
    iterations: int
    separation_detected: bool = False
    vcov: np.ndarray | None = None
    se: np.ndarray | None = None
    gradient_norm: float = float("nan")
    loglik: float = float("nan")
    timings: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "beta", _frozen_array(self.beta, np.float64).reshape(-1))

    def with_vcov(self, vcov: np.ndarray) -> FitResult:
        """Attach a variance-covariance matrix and the matching standard errors."""
        vcov = np.asarray(vcov, dtype=np.float64)
        vcov = (vcov + vcov.T) / 2
        se = np.sqrt(np.clip(np.diag(vcov), 0.0, None))
        return replace(self, vcov=_frozen_array(vcov, np.float64), se=_frozen_array(se, np.float64))

    def with_timings(self, **timings: float) -> FitResult:
        return replace(self, timings={**self.timings, **timings})


def class_counts(data: Dataset) -> tuple[int, int]:
    """Return (n0, n1), the number of rows with y=0 and y=1."""
    n1 = int(np.count_nonzero(data.y))
    return data.n - n1, n1


def _resolve_response(columns: list[str], response_column: str | int) -> str:
    if isinstance(response_column, int):
        if not -len(columns) <= response_column < len(columns):
            raise SchemaError(f"response column index {response_column} out of range for {len(columns)} columns")
        return columns[response_column]
    if response_column not in columns:
        raise SchemaError(f"response column {response_column!r} not found; columns are {columns}")
    return response_column


def _numeric_column(frame: pd.DataFrame, name: str, error_type: type[ParseError] | type[SchemaError]) -> np.ndarray:
    values = pd.to_numeric(frame[name], errors="coerce")
    bad = values.isna().to_numpy()
    if bad.any():
        position = int(np.flatnonzero(bad)[0])
        line = position + 2  # header is line 1
        raw = frame[name].iloc[position]
        reason = "missing value" if pd.isna(raw) else f"non-numeric value {raw!r}"
        raise error_type(f"line {line}: {reason} in column {name!r}", row=line)
    return values.to_numpy(dtype=np.float64)


def load_csv(path: str | Path, response_column: str | int = -1, intercept: bool = True) -> Dataset:
    """
    Load a Dataset from a comma-separated file with a header row.

    Parameters
    ----------
    path : str or Path
        CSV file.
    response_column : str or int, optional
        Column name or position of the binary response (default: last column).
    intercept : bool, optional
        Prepend an all-ones column to the covariates (default: True). A column
        already named "intercept" is used as is.

    Returns
    -------
    Dataset
        Covariates in declared column order, with the intercept first when requested.

    Raises
    ------
    ParseError
        Ragged row, missing or non-numeric covariate (carries the file line).
    SchemaError
        Response value not coercible to {0, 1}, or unknown response column.
    """
    try:
        frame = pd.read_csv(path, float_precision="round_trip", skipinitialspace=True)
    except pd.errors.EmptyDataError as exc:
        raise ParseError(f"{path}: file is empty") from exc
    except pd.errors.ParserError as exc:
        match = re.search(r"line (\d+)", str(exc))
        row = int(match.group(1)) if match else None
        raise ParseError(f"{path}: malformed row: {exc}", row=row) from exc

    columns = [str(c) for c in frame.columns]
    frame.columns = columns
    response = _resolve_response(columns, response_column)
    features = [c for c in columns if c != response]
    if not features and not intercept:
        raise SchemaError(f"{path}: no covariate columns besides the response")
    if len(frame) == 0:
        raise ParseError(f"{path}: header only, no data rows")

    y = _numeric_column(frame, response, SchemaError)
    bad = np.flatnonzero((y != 0) & (y != 1))
    if bad.size:
        line = int(bad[0]) + 2
        raise SchemaError(f"line {line}: response {y[bad[0]]!r} is not 0 or 1", row=line)

    columns_x = [_numeric_column(frame, name, ParseError) for name in features]
    names = list(features)
    if intercept and "intercept" not in names:
        columns_x.insert(0, np.ones(len(frame)))
        names.insert(0, "intercept")
    x = np.column_stack(columns_x)

    logger.debug("loaded %s: n=%d d=%d intercept=%s", path, x.shape[0], x.shape[1], intercept)
    return Dataset(x, y.astype(np.uint8), tuple(names))


def write_csv(
    data: Dataset, path: str | Path, response_name: str = "y", feature_names: Sequence[str] | None = None
) -> None:
    """
    Write a Dataset as CSV (all covariate columns, then the response).

    Values carry 17 significant digits, so ``load_csv(path, intercept=False)``
    reproduces x and y bit-exactly.
    """
    names = list(feature_names or data.feature_names or [f"x{j}" for j in range(data.d)])
    if len(names) != data.d:
        raise SchemaError(f"expected {data.d} feature names, got {len(names)}")
    frame = pd.DataFrame(data.x, columns=names)
    frame[response_name] = data.y.astype(np.int64)
    frame.to_csv(path, index=False, float_format="%.17g")


def write_binary(data: Dataset, path: str | Path) -> None:
    """Write the OSMC1 cache: magic, u64 n, u64 d, row-major f64 x, u8 y (little-endian)."""
    with open(path, "wb") as f:
        f.write(BINARY_MAGIC)
        f.write(np.array([data.n, data.d], dtype="<u8").tobytes())
        f.write(np.ascontiguousarray(data.x, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(data.y, dtype=np.uint8).tobytes())


def read_binary(path: str | Path) -> Dataset:
    """Read a Dataset from the OSMC1 cache format."""
    payload = Path(path).read_bytes()
    if not payload.startswith(BINARY_MAGIC):
        raise ParseError(f"{path}: not an OSMC1 file (bad magic)")
    offset = len(BINARY_MAGIC)
    if len(payload) < offset + 16:
        raise ParseError(f"{path}: truncated header")
    n, d = (int(v) for v in np.frombuffer(payload, dtype="<u8", count=2, offset=offset))
    offset += 16
    expected = offset + 8 * n * d + n
    if len(payload) != expected:
        raise ParseError(f"{path}: expected {expected} bytes for n={n} d={d}, found {len(payload)}")
    x = np.frombuffer(payload, dtype="<f8", count=n * d, offset=offset).reshape(n, d)
    y = np.frombuffer(payload, dtype=np.uint8, count=n, offset=offset + 8 * n * d)
    return Dataset(x.astype(np.float64), y)
