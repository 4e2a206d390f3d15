"""
Seeded data generators shared by the experiments and the tests.
"""

from collections.abc import Sequence

import numpy as np
from numpy.typing import ArrayLike

from .errors import PreconditionError
from .grid import Grid, RealArray, VectorField
from .models import LameParams, Space
from .propagator import FrequencyLocalizer


def _polarization(grid: Grid, polarization: ArrayLike | None) -> np.ndarray:
    if polarization is None:
        vector = np.zeros(grid.n, dtype=np.complex128)
        vector[0] = 1.0
        return vector
    vector = np.asarray(polarization, dtype=np.complex128)
    if vector.shape != (grid.n,):
        raise PreconditionError(f"Polarization must have {grid.n} components")
    return vector


def _spread(grid: Grid, vector: np.ndarray, profile: ArrayLike) -> VectorField:
    values = vector.reshape((grid.n,) + (1,) * grid.n) * np.asarray(profile)[None]
    return VectorField(grid, Space.PHYSICAL, values)


def default_envelope(j: int) -> float:
    """Envelope radius used for shell-j data; it shrinks like 2^-j."""
    return 2.0 ** (1 - j)


def random_field(grid: Grid, rng: np.random.Generator, space: Space = Space.PHYSICAL) -> VectorField:
    """Complex Gaussian samples at every site."""
    shape = (grid.n, *grid.shape)
    values = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return VectorField(grid, space, values)


def shell_random_field(
    grid: Grid,
    j: int,
    rng: np.random.Generator,
    envelope_radius: float | None = None,
    centre: Sequence[float] | None = None,
) -> VectorField:
    """Random data on the shell |xi| ~ 2^j, concentrated near a centre.

    Complex Gaussian coefficients are cut to the shell, multiplied by a Gaussian
    envelope in physical space and cut to the shell again.
    """
    localizer = FrequencyLocalizer(j)
    if not np.any(localizer.multiplier(grid)):
        raise PreconditionError(f"Shell j={j} holds no lattice frequencies")
    radius = default_envelope(j) if envelope_radius is None else envelope_radius
    coefficients = random_field(grid, rng, Space.FREQUENCY)
    raw = localizer.apply(coefficients).to_physical()
    distance = grid.distance(centre if centre is not None else grid.centre)
    envelope = np.exp(-0.5 * (distance / radius) ** 2)
    shaped = raw.with_values(raw.values * envelope[None])
    return localizer.apply(shaped)


def smooth_bump(
    grid: Grid,
    centre: Sequence[float] | None = None,
    radius: float = 1.0,
    polarization: ArrayLike | None = None,
) -> VectorField:
    """C-infinity bump exp(-1/(1 - s^2)) with s = |x - x0|/radius, times a fixed vector."""
    if radius <= 0:
        raise PreconditionError("Bump radius must be positive")
    s = grid.distance(centre if centre is not None else grid.centre) / radius
    inside = s < 1
    profile = np.zeros(grid.shape)
    profile[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return _spread(grid, _polarization(grid, polarization), profile)


def delta_field(
    grid: Grid, site: Sequence[int] | None = None, polarization: ArrayLike | None = None
) -> VectorField:
    """Lattice delta of unit mass at one site (the centre by default)."""
    index = tuple(site) if site is not None else (grid.N // 2,) * grid.n
    profile = np.zeros(grid.shape)
    profile[index] = 1.0 / grid.cell_volume
    return _spread(grid, _polarization(grid, polarization), profile)


def plane_mode(grid: Grid, k: Sequence[int], polarization: ArrayLike | None = None) -> VectorField:
    """e^{i x.xi_k} times a fixed vector, for a signed multi-index k."""
    xi = grid.frequency_at(k)
    phase = np.tensordot(xi, grid.coordinates(), axes=1)
    return _spread(grid, _polarization(grid, polarization), np.exp(1j * phase))


def random_lame_params(rng: np.random.Generator) -> LameParams:
    """Elliptic (lambda, mu) with mu in [0.5, 2] and lambda + 2 mu >= 0.25."""
    mu = float(rng.uniform(0.5, 2.0))
    lam = float(rng.uniform(-2 * mu + 0.25, 3.0))
    return LameParams(lam=lam, mu=mu)


def random_rotation(n: int, rng: np.random.Generator) -> RealArray:
    """Haar-distributed element of SO(n) from a QR factorization."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
