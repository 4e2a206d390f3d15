"""Shared fixtures: small lattices, Lamé constants and seeded generators."""

import math

import numpy as np
import pytest

from src.lame_spectral.grid import Grid, make_grid
from src.lame_spectral.models import LameParams


@pytest.fixture
def grid2() -> Grid:
    return make_grid(2, 32, 2 * math.pi)


@pytest.fixture
def grid3() -> Grid:
    return make_grid(3, 16, 2 * math.pi)


@pytest.fixture(params=[2, 3], ids=["n2", "n3"])
def grid(request: pytest.FixtureRequest) -> Grid:
    N = 32 if request.param == 2 else 16
    return make_grid(request.param, N, 2 * math.pi)


@pytest.fixture
def params() -> LameParams:
    return LameParams(lam=1.0, mu=1.0)


@pytest.fixture
def soft_params() -> LameParams:
    """Near the ellipticity edge: lambda + 2 mu small, P slower than S."""
    return LameParams(lam=-1.5, mu=1.0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


def random_unit(n: int, rng: np.random.Generator) -> np.ndarray:
    vector = rng.standard_normal(n)
    return vector / np.linalg.norm(vector)
