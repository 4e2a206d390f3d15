"""
Space-time resolvent of the damped Lamé operator.

The multiplier of (d_t^2 - Lame + a d_t - z)^-1 on the (tau, xi) lattice is

    ((-tau^2 + i a tau - z) I + L(xi))^-1
        = sum_sign R_sign diag(1/d_P, 1/d_S, ..., 1/d_S) R_sign^T phi_sign,

with d_P = (lambda + 2 mu)|xi|^2 - tau^2 + i a tau - z and d_S likewise with mu.
At xi = 0 it is the scalar 1/(-tau^2 + i a tau - z). The time axis uses the same
DFT convention as space, tau = (2 pi/T) m.
"""

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import scipy.fft
import structlog
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .angular import DEFAULT_PARTITION, AngularPartition, phi, rotation_matrices
from .errors import PreconditionError, SingularityError
from .grid import ComplexArray, Grid, RealArray, forward_values, inverse_values
from .models import EstimateReport, LameParams, ResolventParams, Sample, SignBranch, Space
from .norms import reciprocal, spacetime_norm
from .parallel import parallel_map
from .propagator import get_propagator
from .symbol import lame_symbol_at

logger = structlog.get_logger(__name__)


class SpaceTimeGrid(BaseModel):
    """A spatial grid times M samples on a periodic time box of length T."""

    model_config = ConfigDict(frozen=True)

    space: Grid = Field(..., description="Spatial lattice")
    M: int = Field(..., description="Time samples (power of two, at least 8)")
    T: float = Field(..., description="Time box length")

    @field_validator("M")
    @classmethod
    def _check_samples(cls, value: int) -> int:
        if value < 8 or value & (value - 1):
            raise ValueError(f"M must be a power of two >= 8, got {value}")
        return value

    @field_validator("T")
    @classmethod
    def _check_length(cls, value: float) -> float:
        if not (np.isfinite(value) and value > 0):
            raise ValueError(f"Time box length must be positive, got {value}")
        return value

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def time_step(self) -> float:
        return self.T / self.M

    @property
    def cell(self) -> float:
        """Riemann weight of one space-time site."""
        return self.time_step * self.space.cell_volume

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.M, *self.space.shape)

    def times(self) -> RealArray:
        return self.time_step * np.arange(self.M, dtype=np.float64)

    def frequencies(self) -> RealArray:
        """tau in FFT wrap order."""
        return 2 * np.pi * scipy.fft.fftfreq(self.M, d=self.time_step)


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """n-component field on a SpaceTimeGrid, values of shape (n, M, N, ..., N)."""

    grid: SpaceTimeGrid
    space: Space
    values: ComplexArray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.complex128, copy=True)
        expected = (self.grid.n, *self.grid.shape)
        if values.shape != expected:
            raise PreconditionError(f"Space-time field shape {values.shape} != {expected}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def to_frequency(self) -> "SpaceTimeField":
        if self.space is Space.FREQUENCY:
            return self
        return SpaceTimeField(
            self.grid, Space.FREQUENCY, forward_values(self.values, self.grid.n + 1)
        )

    def to_physical(self) -> "SpaceTimeField":
        if self.space is Space.PHYSICAL:
            return self
        return SpaceTimeField(
            self.grid, Space.PHYSICAL, inverse_values(self.values, self.grid.n + 1)
        )

    def lp_norm(self, p: float) -> float:
        """Space-time L^p norm with the Riemann weight dt (L/N)^n."""
        return spacetime_norm(self.to_physical().values, p, self.grid.cell)


def make_spacetime_grid(space: Grid, M: int, T: float) -> SpaceTimeGrid:
    try:
        return SpaceTimeGrid(space=space, M=M, T=T)
    except ValueError as e:
        raise PreconditionError(f"Invalid space-time grid (M={M}, T={T}): {e}") from e


def default_floor(st_grid: SpaceTimeGrid, params: LameParams) -> float:
    """1e-3 times the largest lattice eigenvalue of L(xi)."""
    k2 = float(np.max(st_grid.space.wavenumber_norm())) ** 2
    return 1e-3 * max(params.lam + 2 * params.mu, params.mu) * k2


def _temporal(tau: ArrayLike, rp: ResolventParams) -> ComplexArray:
    tau = np.asarray(tau, dtype=np.float64)
    return -(tau**2) + 1j * rp.a * tau - rp.z


def _singular(tau: float, xi: ArrayLike, distance: float, floor: float) -> SingularityError:
    xi_tuple = tuple(float(x) for x in np.asarray(xi))
    return SingularityError(
        f"Resolvent denominator {distance:.3e} below floor {floor:.3e} "
        f"at tau={tau}, xi={xi_tuple}",
        tau=float(tau),
        xi=xi_tuple,
        distance=float(distance),
    )


def resolvent_multiplier_at(
    tau: float,
    xi: ArrayLike,
    params: LameParams,
    rp: ResolventParams,
    floor: float = 0.0,
    partition: AngularPartition = DEFAULT_PARTITION,
) -> ComplexArray:
    """((-tau^2 + i a tau - z) I + L(xi))^-1 by the branch diagonalization.

    Raises:
        SingularityError: If a denominator is smaller than floor (or zero).
    """
    xi = np.asarray(xi, dtype=np.float64)
    n = xi.shape[0]
    shift = complex(_temporal(tau, rp))
    k2 = float(np.sum(xi * xi))
    denominators = np.array(
        [(params.lam + 2 * params.mu) * k2 + shift] + [params.mu * k2 + shift] * (n - 1)
    )
    distance = float(np.min(np.abs(denominators)))
    if distance == 0.0 or distance < floor:
        raise _singular(tau, xi, distance, floor)
    if k2 == 0.0:
        return np.eye(n, dtype=np.complex128) / shift
    omega = xi / np.sqrt(k2)
    out = np.zeros((n, n), dtype=np.complex128)
    for sign in SignBranch:
        weight = phi(omega, sign, partition)
        if weight == 0.0:
            continue
        R = rotation_matrices(omega, sign)
        out += weight * (R @ np.diag(1.0 / denominators) @ R.T)
    return out


def _denominators(
    st_grid: SpaceTimeGrid, params: LameParams, rp: ResolventParams
) -> tuple[ComplexArray, ComplexArray, ComplexArray]:
    n = st_grid.n
    shift = _temporal(st_grid.frequencies(), rp).reshape((st_grid.M,) + (1,) * n)
    k2 = st_grid.space.wavenumber_norm()[None] ** 2
    return (params.lam + 2 * params.mu) * k2 + shift, params.mu * k2 + shift, shift


def check_floor(
    st_grid: SpaceTimeGrid, params: LameParams, rp: ResolventParams, floor: float
) -> float:
    """Smallest denominator modulus over the lattice; raises below the floor."""
    d_p, d_s, _ = _denominators(st_grid, params, rp)
    distances = np.minimum(np.abs(d_p), np.abs(d_s))
    where = np.unravel_index(int(np.argmin(distances)), distances.shape)
    distance = float(distances[where])
    if distance == 0.0 or distance < floor:
        tau = float(st_grid.frequencies()[where[0]])
        xi = st_grid.space.wavenumbers()[(slice(None), *where[1:])]
        raise _singular(tau, xi, distance, floor)
    return distance


def apply_resolvent(
    F: SpaceTimeField,
    params: LameParams,
    rp: ResolventParams,
    floor: float | None = None,
    partition: AngularPartition = DEFAULT_PARTITION,
) -> SpaceTimeField:
    """Space-time DFT, the resolvent multiplier, inverse DFT.

    The result is returned in F's space. The floor defaults to default_floor.

    Raises:
        SingularityError: With the offending (tau, xi) if the floor is violated.
    """
    st_grid = F.grid
    floor = default_floor(st_grid, params) if floor is None else floor
    check_floor(st_grid, params, rp, floor)
    d_p, d_s, shift = _denominators(st_grid, params, rp)
    propagator = get_propagator(st_grid.space, params, partition)
    F_hat = F.to_frequency().values
    zero = F_hat[propagator.zero] / shift.reshape(st_grid.M)
    values = propagator.combine(propagator.project(F_hat), 1.0 / d_p, 1.0 / d_s, zero)
    out = SpaceTimeField(st_grid, Space.FREQUENCY, values)
    return out if F.space is Space.FREQUENCY else out.to_physical()


def apply_operator(
    u: SpaceTimeField, params: LameParams, rp: ResolventParams
) -> SpaceTimeField:
    """(d_t^2 - Lame + a d_t - z) u as the forward multiplier (-tau^2 + i a tau - z) I + L(xi)."""
    st_grid = u.grid
    n = st_grid.n
    U = u.to_frequency().values
    shift = _temporal(st_grid.frequencies(), rp).reshape((st_grid.M,) + (1,) * n)
    xi = st_grid.space.wavenumbers()[:, None]
    k2 = np.sum(xi * xi, axis=0)
    divergence = np.sum(xi * U, axis=0)
    values = (shift + params.mu * k2) * U + (params.lam + params.mu) * xi * divergence
    out = SpaceTimeField(st_grid, Space.FREQUENCY, values)
    return out if u.space is Space.FREQUENCY else out.to_physical()


def inverse_identity_error(
    tau: float, xi: ArrayLike, params: LameParams, rp: ResolventParams
) -> float:
    """|| M(tau, xi) ((-tau^2 + i a tau - z) I + L(xi)) - I ||_max."""
    xi = np.asarray(xi, dtype=np.float64)
    operator = lame_symbol_at(xi, params, z=rp.z) + (-(tau**2) + 1j * rp.a * tau) * np.eye(
        xi.shape[0]
    )
    product = resolvent_multiplier_at(tau, xi, params, rp) @ operator
    return float(np.max(np.abs(product - np.eye(xi.shape[0]))))


def round_trip_error(
    F: SpaceTimeField, params: LameParams, rp: ResolventParams, floor: float = 0.0
) -> float:
    """max |apply_operator(apply_resolvent(F)) - F| / max |F| over the frequency lattice."""
    F_hat = F.to_frequency()
    back = apply_operator(apply_resolvent(F_hat, params, rp, floor), params, rp)
    scale = float(np.max(np.abs(F_hat.values)))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(back.values - F_hat.values))) / scale


def admissible_pq(p: float, q: float, n: int) -> bool:
    """1/p - 1/q = 2/(n+1) and 2n(n+1)/(n^2+4n-1) < p < 2n/(n+1)."""
    if not (1 < p < np.inf and 1 < q < np.inf):
        return False
    gap = np.isclose(reciprocal(p) - reciprocal(q), 2 / (n + 1), rtol=0.0, atol=1e-12)
    lower = 2 * n * (n + 1) / (n * n + 4 * n - 1)
    upper = 2 * n / (n + 1)
    return bool(gap and lower + 1e-12 < p < upper - 1e-12)


def gaussian_test_field(
    st_grid: SpaceTimeGrid,
    spatial_width: float,
    time_width: float,
    centre: Sequence[float] | None = None,
    polarization: ArrayLike | None = None,
    derivative_axis: int = 0,
) -> SpaceTimeField:
    """Spectral x-derivative of a space-time Gaussian; its spatial mean is exactly zero."""
    n = st_grid.n
    if not 0 <= derivative_axis < n:
        raise PreconditionError(f"Derivative axis {derivative_axis} outside 0..{n - 1}")
    vector = np.zeros(n, dtype=np.complex128)
    vector[min(1, n - 1)] = 1.0
    if polarization is not None:
        vector = np.asarray(polarization, dtype=np.complex128)
    space = st_grid.space
    distance = space.distance(centre if centre is not None else space.centre)
    time_offset = st_grid.times() - st_grid.T / 2
    profile = np.exp(-0.5 * (time_offset / time_width) ** 2).reshape(
        (st_grid.M,) + (1,) * n
    ) * np.exp(-0.5 * (distance / spatial_width) ** 2)[None]
    values = vector.reshape((n,) + (1,) * (n + 1)) * profile[None]
    spectrum = forward_values(values, n + 1)
    xi = space.wavenumbers()[derivative_axis][None, None]
    derivative = 1j * xi * spectrum
    derivative[(slice(None), slice(None)) + (0,) * n] = 0.0
    return SpaceTimeField(st_grid, Space.PHYSICAL, inverse_values(derivative, n + 1))


def resolvent_quotient(
    F: SpaceTimeField,
    params: LameParams,
    rp: ResolventParams,
    p: float,
    q: float,
    floor: float | None = None,
) -> float:
    """||R(a, z) F||_{L^q} / ||F||_{L^p}."""
    denominator = F.lp_norm(p)
    if denominator == 0.0:
        raise PreconditionError("Quotient undefined for a vanishing test field")
    return apply_resolvent(F, params, rp, floor).lp_norm(q) / denominator


def _descriptor(rp: ResolventParams, floor: float) -> dict[str, float | int | str]:
    return {
        "a_re": rp.a.real,
        "a_im": rp.a.imag,
        "z_re": rp.z.real,
        "z_im": rp.z.imag,
        "abs_z": abs(rp.z),
        "floor": floor,
    }


def sobolev_quotient_sweep(
    fields: Sequence[SpaceTimeField],
    rps: Sequence[ResolventParams],
    p: float,
    q: float,
    params: LameParams,
    floor: float | None = None,
    max_ratio: float = 10.0,
    jobs: int | None = None,
) -> EstimateReport:
    """Uniform Sobolev quotients over a sweep of (a, z).

    The quotient of one (a, z) is the largest over the test fields. Points that
    violate the floor are skipped and listed in the notes. The report passes when
    nothing was skipped and max/min over the sweep stays within max_ratio.
    """
    if not fields or not rps:
        raise PreconditionError("A sweep needs at least one field and one (a, z)")
    n = fields[0].grid.n
    if not admissible_pq(p, q, n):
        raise PreconditionError(f"(p, q) = ({p}, {q}) is not resolvent-admissible for n={n}")
    st_grid = fields[0].grid
    floor = default_floor(st_grid, params) if floor is None else floor
    jobs_list = [(i, j) for j in range(len(rps)) for i in range(len(fields))]

    def run(job: tuple[int, int]) -> float | str:
        i, j = job
        try:
            return resolvent_quotient(fields[i], params, rps[j], p, q, floor)
        except SingularityError as e:
            return str(e)

    results = parallel_map(run, jobs_list, jobs)
    samples: list[Sample] = []
    notes: list[str] = []
    per_point: dict[int, float] = {}
    for (i, j), result in zip(jobs_list, results, strict=True):
        if isinstance(result, str):
            notes.append(f"skipped field {i} at a={rps[j].a}, z={rps[j].z}: {result}")
            continue
        descriptor = _descriptor(rps[j], floor) | {"field": i}
        samples.append(Sample(descriptor=descriptor, value=result))
        per_point[j] = max(per_point.get(j, 0.0), result)

    maxima = list(per_point.values())
    largest = max(maxima) if maxima else float("nan")
    smallest = min(maxima) if maxima else float("nan")
    ratio = largest / smallest if maxima and smallest > 0 else float("inf")
    skipped = len(notes)
    logger.info(
        "Resolvent sweep finished", points=len(rps), skipped=skipped, max_min_ratio=ratio
    )
    return EstimateReport.from_checks(
        "resolvent_sweep",
        checks={
            "no_skipped_points": skipped == 0,
            "all_finite": bool(maxima) and all(np.isfinite(maxima)),
            "uniform": ratio <= max_ratio,
        },
        samples=samples,
        statistics={"max_quotient": largest, "min_quotient": smallest, "max_min_ratio": ratio},
        tolerances={"max_ratio": max_ratio, "floor": floor},
        parameters={"p": p, "q": q, "n": n, "lambda": params.lam, "mu": params.mu},
        notes=notes,
    )


def divergence_probe(
    fields: Sequence[SpaceTimeField],
    z0: complex,
    deltas: Sequence[float],
    p: float,
    q: float,
    params: LameParams,
    a: complex = 0j,
    floor: float | None = None,
    min_growth: float = 10.0,
    jobs: int | None = None,
) -> EstimateReport:
    """Quotients at z = z0 + i delta for shrinking delta, and their growth.

    Intended for non-admissible (p, q) with z0 on the spectrum; admissibility is
    not required. The floor defaults to 1e-3 times the smallest delta.
    """
    if not fields or len(deltas) < 2:
        raise PreconditionError("The probe needs fields and at least two deltas")
    floor = 1e-3 * min(deltas) if floor is None else floor
    rps = [ResolventParams(a=a, z=z0 + 1j * delta) for delta in deltas]

    def run(rp: ResolventParams) -> float:
        return max(resolvent_quotient(F, params, rp, p, q, floor) for F in fields)

    quotients = parallel_map(run, rps, jobs)
    samples = [
        Sample(descriptor=_descriptor(rp, floor) | {"delta": delta}, value=value)
        for rp, delta, value in zip(rps, deltas, quotients, strict=True)
    ]
    growth = quotients[-1] / quotients[0]
    logger.info("Divergence probe finished", deltas=list(deltas), growth=growth)
    return EstimateReport.from_checks(
        "resolvent_divergence_probe",
        checks={"grows": growth >= min_growth},
        samples=samples,
        statistics={"growth": growth, "delta_reduction": deltas[0] / deltas[-1]},
        tolerances={"min_growth": min_growth, "floor": floor},
        parameters={"p": p, "q": q, "z0_re": z0.real, "z0_im": z0.imag},
    )
