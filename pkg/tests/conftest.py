"""Shared fixtures: small synthetic datasets and random instances."""

import numpy as np
import pytest

from osmac.datamodel import Dataset
from osmac.sampler import Rng
from osmac.synthgen import generate, scenario


def random_instance(seed: int, n: int = 50, d: int = 5, scale: float = 0.5) -> tuple[Dataset, np.ndarray]:
    """Gaussian covariates, logistic responses, and a random coefficient vector."""
    gen = np.random.default_rng(seed)
    x = gen.standard_normal((n, d))
    beta = scale * gen.standard_normal(d)
    p = 1.0 / (1.0 + np.exp(-(x @ beta)))
    y = (gen.random(n) < p).astype(np.uint8)
    # both classes present
    y[0], y[1] = 0, 1
    return Dataset(x, y), beta


@pytest.fixture
def instance():
    return random_instance


@pytest.fixture(scope="session")
def mz_small():
    """mzNormal replicate, n=2000."""
    return generate(scenario("mzNormal", 2000), Rng(11))


@pytest.fixture(scope="session")
def mz_medium():
    """mzNormal replicate, n=10000."""
    return generate(scenario("mzNormal", 10_000), Rng(12))


@pytest.fixture
def separable():
    """Perfectly separated one-covariate data with an intercept."""
    z = np.linspace(-2.0, 2.0, 40)
    x = np.column_stack([np.ones_like(z), z])
    y = (z > 0).astype(np.uint8)
    return Dataset(x, y)


@pytest.fixture
def csv_file(tmp_path):
    """Small well-formed CSV with a header and the response last."""
    gen = np.random.default_rng(5)
    x = gen.standard_normal((300, 2))
    p = 1.0 / (1.0 + np.exp(-(0.3 + x @ np.array([1.0, -0.5]))))
    y = (gen.random(300) < p).astype(int)
    lines = ["a,b,label"] + [f"{float(a)!r},{float(b)!r},{label}" for (a, b), label in zip(x, y, strict=True)]
    path = tmp_path / "data.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
