"""
Seedable random machinery: substream generators, alias-table sampling with
replacement, Poisson acceptance sampling and the variates used by synthgen.

Every draw is a pure function of (seed, stream, call sequence). Generators are
numpy PCG64 instances seeded through ``SeedSequence(seed, spawn_key=...)``, so
streams are independent and reproducible on every platform.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from osmac.datamodel import SamplingPlan, Scheme, Step, Subsample
from osmac.errors import NotNormalizedError, WrongSchemeError

logger = logging.getLogger(__name__)


class Rng:
    """
    Deterministic generator identified by (seed, stream).

    Not shareable between workers: each worker owns its own instance.
    ``spawn(key)`` derives an independent child stream, used to give every
    (method, grid point) of one repetition its own draws.
    """

    __slots__ = "seed", "stream", "_key", "_generator"

    def __init__(self, seed: int, stream: int = 0, _key: tuple[int, ...] | None = None):
        self.seed = int(seed)
        self.stream = int(stream)
        self._key = (self.stream,) if _key is None else _key
        sequence = np.random.SeedSequence(self.seed, spawn_key=self._key)
        self._generator = np.random.Generator(np.random.PCG64(sequence))

    def __repr__(self):
        return f"Rng(seed={self.seed}, stream={self.stream}, key={self._key})"

    def spawn(self, key: int) -> Rng:
        return Rng(self.seed, self.stream, self._key + (int(key),))

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def uniform01(self, size=None):
        return self._generator.random(size)

    def standard_normal(self, size=None):
        return self._generator.standard_normal(size)

    def chi_square(self, df: float, size=None):
        return self._generator.chisquare(df, size)

    def exponential(self, rate: float, size=None):
        return self._generator.exponential(1.0 / rate, size)

    def integers(self, high: int, size=None):
        return self._generator.integers(0, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)


def uniform01(rng: Rng, size=None):
    """Uniform variates on [0, 1)."""
    return rng.uniform01(size)


def standard_normal(rng: Rng, size=None):
    """N(0, 1) variates."""
    return rng.standard_normal(size)


def chi_square(rng: Rng, df: float, size=None):
    """Chi-square variates with ``df`` degrees of freedom."""
    return rng.chi_square(df, size)


def exponential(rng: Rng, rate: float, size=None):
    """Exponential variates with the given rate (mean 1/rate)."""
    return rng.exponential(rate, size)


@dataclass(frozen=True)
class AliasTable:
    """
    Walker/Vose alias table: draw column i uniformly, keep it with
    probability ``prob[i]``, otherwise return ``alias[i]``.
    """

    prob: np.ndarray
    alias: np.ndarray

    @property
    def n(self) -> int:
        return self.prob.shape[0]


def build_alias(plan: SamplingPlan) -> AliasTable:
    """
    Build the alias table of a replacement plan in O(n).

    Zero-probability rows get ``prob = 0`` and are never returned.

    Raises
    ------
    WrongSchemeError
        The plan is an acceptance (Poisson) plan.
    NotNormalizedError
        The plan does not sum to one.
    """
    if not plan.scheme.with_replacement:
        raise WrongSchemeError(f"alias tables need a replacement plan, got {plan.scheme.value}")
    total = float(np.sum(plan.pi))
    if abs(total - 1.0) > 1e-9:
        raise NotNormalizedError(f"plan sums to {total!r}")

    n = plan.n
    scaled = plan.pi * n
    prob = np.ones(n)
    alias = np.arange(n, dtype=np.int64)

    large_mask = scaled >= 1.0
    if not large_mask.any():
        # rounding can leave every column just under one
        large_mask[np.argmax(scaled)] = True
    small = np.flatnonzero(~large_mask)
    large = np.flatnonzero(large_mask)
    if small.size:
        # deficits of the small columns and excesses of the large ones, laid end to end
        deficit_bounds = np.concatenate(([0.0], np.cumsum(1.0 - scaled[small])))
        deficit_start = deficit_bounds[:-1]
        excess_end = np.cumsum(scaled[large] - 1.0)

        # a small column borrows from the large whose excess holds the start of its deficit
        donor = np.minimum(np.searchsorted(excess_end, deficit_start, side="right"), large.size - 1)
        prob[small] = scaled[small]
        alias[small] = large[donor]

        # a large column gives away what its borrowers overshoot past its excess; the next large repays it
        served = np.searchsorted(deficit_start, excess_end, side="left")
        overshoot = np.clip(deficit_bounds[served] - excess_end, 0.0, 1.0)
        overshoot[-1] = 0.0
        prob[large] = 1.0 - overshoot
        alias[large[:-1]] = large[1:]

    prob.flags.writeable = False
    alias.flags.writeable = False
    return AliasTable(prob, alias)


def implied_probabilities(table: AliasTable) -> np.ndarray:
    """Exact per-index draw probability of an alias table."""
    n = table.n
    received = np.bincount(table.alias, weights=1.0 - table.prob, minlength=n)
    return (table.prob + received) / n


def draw_with_replacement(table: AliasTable, plan: SamplingPlan, r: int, rng: Rng, tag: Step = Step.STEP1) -> Subsample:
    """
    Draw ``r`` i.i.d. row indices from ``plan`` through its alias table.

    Each drawn row records ``plan.pi`` at that index and the step ``tag``.
    """
    if r < 1:
        raise ValueError(f"subsample size must be >= 1, got {r}")
    columns = rng.integers(table.n, size=r)
    coins = rng.uniform01(size=r)
    indices = np.where(coins < table.prob[columns], columns, table.alias[columns])
    return Subsample(indices, plan.pi[indices], np.full(r, int(tag), dtype=np.uint8))


def draw_poisson(plan: SamplingPlan, rng: Rng, tag: Step = Step.STEP2) -> Subsample:
    """Include each row independently with probability ``plan.pi[i]``."""
    if plan.scheme is not Scheme.LCC_ACCEPTANCE:
        raise WrongSchemeError(f"Poisson sampling needs an acceptance plan, got {plan.scheme.value}")
    accepted = np.flatnonzero(rng.uniform01(size=plan.n) < plan.pi)
    logger.debug("poisson sampling accepted %d of %d rows", accepted.size, plan.n)
    return Subsample(accepted, plan.pi[accepted], np.full(accepted.size, int(tag), dtype=np.uint8))
