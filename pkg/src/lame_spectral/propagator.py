"""
Evolution operators built from the diagonalized Lamé symbol.

Every evolution operator is a spectral function of L(xi). In the rotated frame
of a branch it acts as diag(h(c_p|xi|), h(c_s|xi|), ..., h(c_s|xi|)), so

    h(sqrt L)(D) F = sum_sign R_sign diag(h(...)) R_sign^T phi_sign F_hat,

with the xi = 0 mode multiplied by h(0). SpectralPropagator caches |xi|, the
partition weights and the two RotationFields per (grid, params, partition) and
implements this formula once; halfwave, cos_prop, sin_prop, the energy and the
Duhamel integrals are all instances of it.

sin(t sqrt L) sqrt(L)^-1 is evaluated as t sinc(t sqrt L), regular at xi = 0.
"""

from collections.abc import Callable, Sequence
from dataclasses import dataclass
from functools import lru_cache
from typing import Self

import numpy as np
import scipy.integrate
import structlog
from numpy.typing import ArrayLike

from .angular import DEFAULT_PARTITION, AngularPartition, RotationField, smooth_step
from .angular import rotation_field as build_rotation_field
from .config import config
from .errors import ConvergenceError, PreconditionError
from .grid import ComplexArray, Grid, RealArray, VectorField, forward_values, inverse_values
from .linalg import expm_pade
from .models import LameParams, PicardTrace, SignBranch, Space
from .symbol import lame_symbol_at

logger = structlog.get_logger(__name__)

SpectralFunction = Callable[[RealArray], ComplexArray]


def _tsinc(t: ArrayLike, w: ArrayLike) -> RealArray:
    """t sinc(t w) = sin(t w)/w, equal to t at w = 0."""
    t = np.asarray(t, dtype=np.float64)
    return t * np.sinc(t * np.asarray(w) / np.pi)


# -- frequency localization ---------------------------------------------------


def beta(t: ArrayLike) -> RealArray:
    """Dyadic profile: 1 on [1/2, 2], 0 outside (1/4, 4), smooth in between."""
    t = np.asarray(t, dtype=np.float64)
    rising = smooth_step((t - 0.25) / 0.25)
    falling = smooth_step((4.0 - t) / 2.0)
    return np.where(t <= 2.0, rising, falling)


@dataclass(frozen=True)
class FrequencyLocalizer:
    """Multiplier beta(2^-j |xi|) selecting the dyadic shell |xi| ~ 2^j."""

    j: int

    def multiplier(self, grid: Grid) -> RealArray:
        return beta(grid.wavenumber_norm() / 2.0**self.j)

    def apply(self, f: VectorField) -> VectorField:
        F = f.to_frequency()
        out = F.with_values(self.multiplier(f.grid) * F.values)
        return out if f.space is Space.FREQUENCY else out.to_physical()


def frequency_localize(f: VectorField, j: int) -> VectorField:
    """Multiply by beta(2^-j |xi|); the result is returned in f's space."""
    return FrequencyLocalizer(j).apply(f)


# -- data containers ----------------------------------------------------------


@dataclass(frozen=True)
class CauchyData:
    """Displacement f and velocity g at t = 0."""

    f: VectorField
    g: VectorField

    def __post_init__(self) -> None:
        try:
            self.f.check_compatible(self.g)
        except PreconditionError as e:
            raise PreconditionError(f"Inconsistent Cauchy data: {e}") from e

    @property
    def grid(self) -> Grid:
        return self.f.grid

    @property
    def space(self) -> Space:
        return self.f.space

    @classmethod
    def displacement_only(cls, f: VectorField) -> Self:
        return cls(f, VectorField.zeros(f.grid, f.space))

    @classmethod
    def velocity_only(cls, g: VectorField) -> Self:
        return cls(VectorField.zeros(g.grid, g.space), g)


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Fields sampled on a uniform time mesh, values of shape (K+1, n, N, ..., N)."""

    grid: Grid
    space: Space
    times: RealArray
    values: ComplexArray

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.complex128)
        if times.ndim != 1 or times.size == 0:
            raise PreconditionError("A time series needs at least one time")
        if values.shape != (times.size, self.grid.n, *self.grid.shape):
            raise PreconditionError(
                f"Series shape {values.shape} does not match {times.size} snapshots"
            )
        if times.size > 1:
            steps = np.diff(times)
            step = float(steps[0])
            if step <= 0 or np.max(np.abs(steps - step)) > 1e-9 * step:
                raise PreconditionError("Time mesh must be uniform and increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    def __len__(self) -> int:
        return int(self.times.size)

    def at(self, k: int) -> VectorField:
        return VectorField(self.grid, self.space, self.values[k])

    def fields(self) -> list[VectorField]:
        return [self.at(k) for k in range(len(self))]

    @classmethod
    def from_fields(cls, times: Sequence[float], fields: Sequence[VectorField]) -> Self:
        if not fields:
            raise PreconditionError("A time series needs at least one field")
        first = fields[0]
        for field in fields[1:]:
            first.check_compatible(field)
        return cls(first.grid, first.space, np.asarray(times), np.stack([f.values for f in fields]))

    def to_frequency(self) -> "TimeSeries":
        if self.space is Space.FREQUENCY:
            return self
        return TimeSeries(
            self.grid, Space.FREQUENCY, self.times, forward_values(self.values, self.grid.n, 2)
        )

    def to_physical(self) -> "TimeSeries":
        if self.space is Space.PHYSICAL:
            return self
        return TimeSeries(
            self.grid, Space.PHYSICAL, self.times, inverse_values(self.values, self.grid.n, 2)
        )


def uniform_times(t: float, steps: int) -> RealArray:
    """Mesh 0 = t_0 < ... < t_steps = t."""
    if steps < 1:
        raise PreconditionError(f"Need at least one time step, got {steps}")
    return np.linspace(0.0, t, steps + 1)


@dataclass(frozen=True, eq=False)
class PotentialField:
    """Matrix potential V(x), values of shape (n, n, N, ..., N)."""

    grid: Grid
    values: ComplexArray
    symmetric: bool = False

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.complex128, copy=True)
        n = self.grid.n
        if values.shape != (n, n, *self.grid.shape):
            raise PreconditionError(f"Potential shape {values.shape} is not (n, n, grid)")
        if not np.all(np.isfinite(values)):
            raise PreconditionError("Potential has non-finite entries")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def scalar(cls, grid: Grid, samples: ArrayLike) -> Self:
        """V(x) I from scalar samples."""
        samples = np.broadcast_to(np.asarray(samples, dtype=np.complex128), grid.shape)
        eye = np.eye(grid.n).reshape((grid.n, grid.n) + (1,) * grid.n)
        return cls(grid, eye * samples, symmetric=True)

    @classmethod
    def inverse_square(
        cls, grid: Grid, coupling: float, epsilon: float, centre: Sequence[float] | None = None
    ) -> Self:
        """c (|x - x0|^2 + eps^2)^-1 I with the periodic minimum-image distance."""
        if epsilon <= 0:
            raise PreconditionError("Regularization epsilon must be positive")
        r = grid.distance(centre if centre is not None else grid.centre)
        return cls.scalar(grid, coupling / (r**2 + epsilon**2))

    @classmethod
    def box(
        cls, grid: Grid, coupling: float, half_width: float, centre: Sequence[float] | None = None
    ) -> Self:
        """c 1_{|x - x0|_inf < h} I, a compactly supported potential."""
        offset = grid.displacement(centre if centre is not None else grid.centre)
        inside = np.max(np.abs(offset), axis=0) < half_width
        return cls.scalar(grid, coupling * inside)

    def magnitude(self) -> RealArray:
        """Operator norm |V(x)| per site, so c I has modulus |c|."""
        return np.linalg.norm(np.moveaxis(self.values, (0, 1), (-2, -1)), ord=2, axis=(-2, -1))

    def apply(self, u: ComplexArray) -> ComplexArray:
        """V u for u of shape (n, ...grid) or (K, n, ...grid), physical space."""
        if u.ndim == self.grid.n + 1:
            return np.einsum("ij...,j...->i...", self.values, u)
        return np.einsum("ij...,kj...->ki...", self.values, u)

    def __mul__(self, scalar: float) -> "PotentialField":
        return PotentialField(self.grid, scalar * self.values, self.symmetric)

    __rmul__ = __mul__


# -- the multiplier cache -----------------------------------------------------


class SpectralPropagator:
    """Lattice multiplier cache for one (grid, params, partition)."""

    def __init__(self, grid: Grid, params: LameParams, partition: AngularPartition):
        self.grid = grid
        self.params = params
        self.partition = partition
        xi = grid.wavenumbers()
        self.knorm = grid.wavenumber_norm()
        self.p_freq = params.c_p * self.knorm
        self.s_freq = params.c_s * self.knorm
        self.zero = (Ellipsis,) + (0,) * grid.n
        self.fields: dict[SignBranch, RotationField] = {
            sign: build_rotation_field(xi, sign, partition) for sign in SignBranch
        }
        logger.debug("Built multiplier cache", n=grid.n, N=grid.N, L=grid.L)

    def project(self, F_hat: ComplexArray) -> dict[SignBranch, ComplexArray]:
        """R_sign^T phi_sign F_hat for both branches (component axis first)."""
        return {
            sign: field.apply_transpose(field.weight * F_hat)
            for sign, field in self.fields.items()
        }

    def combine(
        self,
        rotated: dict[SignBranch, ComplexArray],
        p_factor: ArrayLike,
        s_factor: ArrayLike,
        zero_value: ArrayLike,
    ) -> ComplexArray:
        """sum_sign R_sign diag(p, s, ..., s) rotated_sign, with the xi = 0 mode set."""
        out: ComplexArray | None = None
        for sign, field in self.fields.items():
            w = np.array(rotated[sign], copy=True)
            w[0] *= p_factor
            w[1:] *= s_factor
            term = field.apply(w)
            out = term if out is None else out + term
        assert out is not None
        out[self.zero] = zero_value
        return out

    def apply_function(self, F_hat: ComplexArray, h: SpectralFunction) -> ComplexArray:
        """h(sqrt L)(D) applied to frequency values F_hat."""
        zero = h(np.zeros(())) * F_hat[self.zero]
        return self.combine(self.project(F_hat), h(self.p_freq), h(self.s_freq), zero)

    def norm_squared(self, F_hat: ComplexArray) -> float:
        """L^2 norm squared from frequency values (Parseval with the Riemann weight)."""
        scale = self.grid.cell_volume / self.grid.sites
        return float(scale * np.sum(np.abs(F_hat) ** 2))


@lru_cache(maxsize=config.multiplier_cache_size)
def get_propagator(
    grid: Grid, params: LameParams, partition: AngularPartition = DEFAULT_PARTITION
) -> SpectralPropagator:
    """Shared, read-only multiplier cache."""
    return SpectralPropagator(grid, params, partition)


def _spectral(
    f: VectorField, params: LameParams, h: SpectralFunction, partition: AngularPartition
) -> VectorField:
    propagator = get_propagator(f.grid, params, partition)
    F = f.to_frequency()
    out = F.with_values(propagator.apply_function(F.values, h))
    return out if f.space is Space.FREQUENCY else out.to_physical()


# -- evolution operators ------------------------------------------------------


def apply_matrix_multiplier(
    F: VectorField,
    m: Callable[[RealArray], ArrayLike] | ArrayLike,
    zero_value: ArrayLike | None = None,
) -> VectorField:
    """Pointwise matrix multiplier m(xi) F_hat(xi).

    Args:
        F: Frequency-space field.
        m: Either a vectorized symbol mapping an (M, n) array of nonzero
            frequencies to (M, n, n) matrices, or precomputed matrices of shape
            (N, ..., N, n, n) in wrap order.
        zero_value: m(0); defaults to the zero matrix.

    Raises:
        PreconditionError: On physical-space input or non-finite values.
    """
    F.require(Space.FREQUENCY)
    grid = F.grid
    n = grid.n
    if callable(m):
        xi = np.moveaxis(grid.wavenumbers(), 0, -1).reshape(-1, n)
        nonzero = np.any(xi != 0, axis=-1)
        matrices = np.zeros((xi.shape[0], n, n), dtype=np.complex128)
        matrices[nonzero] = np.asarray(m(xi[nonzero]), dtype=np.complex128)
        matrices = matrices.reshape((*grid.shape, n, n))
    else:
        matrices = np.array(m, dtype=np.complex128, copy=True)
        if matrices.shape != (*grid.shape, n, n):
            raise PreconditionError(f"Multiplier shape {matrices.shape} does not match the grid")
    matrices[(0,) * n] = 0.0 if zero_value is None else np.asarray(zero_value)
    if not np.all(np.isfinite(matrices)):
        raise PreconditionError("Multiplier has non-finite values")
    values = np.einsum("...ij,j...->i...", matrices, F.values)
    return F.with_values(values)


def halfwave(
    f: VectorField, t: float, params: LameParams, partition: AngularPartition = DEFAULT_PARTITION
) -> VectorField:
    """e^{it sqrt(-Lame)} f."""
    return _spectral(f, params, lambda w: np.exp(1j * t * w), partition)


def cos_prop(
    f: VectorField, t: float, params: LameParams, partition: AngularPartition = DEFAULT_PARTITION
) -> VectorField:
    """cos(t sqrt(-Lame)) f."""
    return _spectral(f, params, lambda w: np.cos(t * w).astype(np.complex128), partition)


def sin_prop(
    g: VectorField, t: float, params: LameParams, partition: AngularPartition = DEFAULT_PARTITION
) -> VectorField:
    """sin(t sqrt(-Lame)) sqrt(-Lame)^-1 g, regularized as t sinc."""
    return _spectral(g, params, lambda w: _tsinc(t, w).astype(np.complex128), partition)


def propagate_series(
    data: CauchyData,
    times: Sequence[float],
    params: LameParams,
    partition: AngularPartition = DEFAULT_PARTITION,
) -> TimeSeries:
    """u(t_k) = cos_prop(f, t_k) + sin_prop(g, t_k) for every t_k, in data's space."""
    propagator = get_propagator(data.grid, params, partition)
    f_hat = data.f.to_frequency().values
    g_hat = data.g.to_frequency().values
    f_rot = propagator.project(f_hat)
    g_rot = propagator.project(g_hat)
    zero = propagator.zero
    out = []
    for t in times:
        u = propagator.combine(
            f_rot, np.cos(t * propagator.p_freq), np.cos(t * propagator.s_freq), f_hat[zero]
        ) + propagator.combine(
            g_rot, _tsinc(t, propagator.p_freq), _tsinc(t, propagator.s_freq), t * g_hat[zero]
        )
        out.append(u)
    series = TimeSeries(data.grid, Space.FREQUENCY, np.asarray(times, dtype=np.float64), np.stack(out))
    return series if data.space is Space.FREQUENCY else series.to_physical()


def solve_homogeneous(
    data: CauchyData,
    t: float,
    params: LameParams,
    partition: AngularPartition = DEFAULT_PARTITION,
) -> VectorField:
    """u(t) = cos_prop(f, t) + sin_prop(g, t)."""
    return propagate_series(data, [t], params, partition).at(0)


def velocity(
    data: CauchyData,
    t: float,
    params: LameParams,
    partition: AngularPartition = DEFAULT_PARTITION,
) -> VectorField:
    """d/dt u(t) = -sqrt L sin(t sqrt L) f + cos(t sqrt L) g, evaluated per mode."""
    propagator = get_propagator(data.grid, params, partition)
    f_hat = data.f.to_frequency().values
    g_hat = data.g.to_frequency().values
    values = propagator.apply_function(
        f_hat, lambda w: (-w * np.sin(t * w)).astype(np.complex128)
    ) + propagator.apply_function(g_hat, lambda w: np.cos(t * w).astype(np.complex128))
    out = VectorField(data.grid, Space.FREQUENCY, values)
    return out if data.space is Space.FREQUENCY else out.to_physical()


def energy(
    data: CauchyData,
    t: float,
    params: LameParams,
    partition: AngularPartition = DEFAULT_PARTITION,
) -> float:
    """E(t) = ||d_t u||^2 + ||sqrt L(D) u||^2 with L^2 Riemann norms."""
    propagator = get_propagator(data.grid, params, partition)
    f_hat = data.f.to_frequency().values
    g_hat = data.g.to_frequency().values
    root_u = propagator.apply_function(
        f_hat, lambda w: (w * np.cos(t * w)).astype(np.complex128)
    ) + propagator.apply_function(g_hat, lambda w: np.sin(t * w).astype(np.complex128))
    speed = velocity(data, t, params, partition).to_frequency().values
    return propagator.norm_squared(speed) + propagator.norm_squared(root_u)


# -- Duhamel integrals --------------------------------------------------------


def duhamel(
    F: TimeSeries,
    t: float,
    params: LameParams,
    dt: float | None = None,
    partition: AngularPartition = DEFAULT_PARTITION,
) -> VectorField:
    """int_0^t sin_prop(t - s) F(s) ds by composite Simpson on F's mesh.

    Raises:
        PreconditionError: If the mesh does not start at 0, does not reach t,
            t is not a mesh node, or dt disagrees with the mesh step.
    """
    times = F.times
    if abs(times[0]) > 1e-12:
        raise PreconditionError("Forcing mesh must start at t = 0")
    step = F.dt
    if t == 0.0:
        return VectorField.zeros(F.grid, F.space)
    if len(F) < 2:
        raise PreconditionError("Forcing mesh does not cover [0, t]")
    if dt is not None and abs(dt - step) > 1e-9 * step:
        raise PreconditionError(f"Quadrature step {dt} differs from the mesh step {step}")
    m = int(round(t / step))
    if m > len(F) - 1 or times[-1] < t - 1e-9 * step:
        raise PreconditionError(f"Forcing mesh ends at {times[-1]}, before t = {t}")
    if m < 1 or abs(m * step - t) > 1e-9 * max(step, abs(t)):
        raise PreconditionError(f"t = {t} is not a node of the forcing mesh")

    propagator = get_propagator(F.grid, params, partition)
    forcing = F.to_frequency().values[: m + 1]
    lag = (t - times[: m + 1]).reshape((m + 1,) + (1,) * F.grid.n)
    stacked = np.moveaxis(forcing, 0, 1)
    rotated = propagator.project(stacked)
    integrated: dict[SignBranch, ComplexArray] = {}
    for sign, w in rotated.items():
        weighted = np.array(w, copy=True)
        weighted[0] *= _tsinc(lag, propagator.p_freq)
        weighted[1:] *= _tsinc(lag, propagator.s_freq)
        integrated[sign] = _simpson(weighted, step, axis=1)
    zero = _simpson(lag[(slice(None),) + (0,) * F.grid.n] * stacked[propagator.zero], step, axis=1)
    values = propagator.combine(integrated, 1.0, 1.0, zero)
    out = VectorField(F.grid, Space.FREQUENCY, values)
    return out if F.space is Space.FREQUENCY else out.to_physical()


def _simpson(y: ComplexArray, dx: float, axis: int) -> ComplexArray:
    if y.shape[axis] == 2:
        return 0.5 * dx * (np.take(y, 0, axis=axis) + np.take(y, 1, axis=axis))
    return scipy.integrate.simpson(y, dx=dx, axis=axis)


def duhamel_series(
    F: TimeSeries,
    params: LameParams,
    partition: AngularPartition = DEFAULT_PARTITION,
) -> TimeSeries:
    """The Duhamel integral at every node of F's mesh.

    Uses sin((t - s) w)/w = S(t) C(s) - C(t) S(s) with C = cos(.w), S = sin(.w)/w
    and cumulative Simpson integrals, so all nodes cost one pass.
    """
    if len(F) < 3:
        raise PreconditionError("duhamel_series needs at least three mesh nodes")
    if abs(F.times[0]) > 1e-12:
        raise PreconditionError("Forcing mesh must start at t = 0")
    propagator = get_propagator(F.grid, params, partition)
    n = F.grid.n
    times = F.times.reshape((len(F),) + (1,) * n)
    stacked = np.moveaxis(F.to_frequency().values, 0, 1)
    step = F.dt

    def cumulative(y: ComplexArray) -> ComplexArray:
        return scipy.integrate.cumulative_simpson(y, dx=step, axis=1, initial=0)

    factors = {
        0: (np.cos(times * propagator.p_freq), _tsinc(times, propagator.p_freq)),
        1: (np.cos(times * propagator.s_freq), _tsinc(times, propagator.s_freq)),
    }
    evolved: dict[SignBranch, ComplexArray] = {}
    for sign, w in propagator.project(stacked).items():
        result = np.empty_like(w)
        for component in range(n):
            c, s = factors[min(component, 1)]
            a = cumulative(c * w[component][None])[0]
            b = cumulative(s * w[component][None])[0]
            result[component] = s * a - c * b
        evolved[sign] = result

    zero_forcing = stacked[propagator.zero]
    t_line = F.times[None, :]
    zero = t_line * cumulative(zero_forcing) - cumulative(t_line * zero_forcing)
    values = propagator.combine(evolved, 1.0, 1.0, zero)
    series = TimeSeries(F.grid, Space.FREQUENCY, F.times, np.moveaxis(values, 1, 0))
    return series if F.space is Space.FREQUENCY else series.to_physical()


def _relative_change(new: ComplexArray, old: ComplexArray) -> float:
    """max over snapshots of ||new - old|| / ||new||, snapshots near zero measured against the peak."""
    axes = tuple(range(1, new.ndim))
    diff = np.sqrt(np.sum(np.abs(new - old) ** 2, axis=axes))
    size = np.sqrt(np.sum(np.abs(new) ** 2, axis=axes))
    floor = max(1e-14 * float(np.max(size)), np.finfo(np.float64).tiny)
    return float(np.max(diff / np.maximum(size, floor)))


def _whole_steps(t: float, dt: float) -> int:
    if not dt > 0:
        raise PreconditionError(f"Time step must be positive, got {dt}")
    ratio = t / dt
    steps = round(ratio)
    if abs(ratio - steps) > 1e-9 * max(1.0, ratio):
        raise PreconditionError(f"dt={dt} does not divide t={t} into whole steps")
    return steps


def solve_perturbed_series(
    data: CauchyData,
    V: PotentialField,
    t: float,
    params: LameParams,
    dt: float | None = None,
    max_iter: int = 50,
    tol: float = 1e-10,
    partition: AngularPartition = DEFAULT_PARTITION,
) -> tuple[TimeSeries, PicardTrace]:
    """Picard iteration u_(k+1) = free + duhamel(-V u_k) on the whole time mesh.

    Returns the physical-space trajectory and the iteration trace.

    Raises:
        ConvergenceError: If max_iter iterations do not reach tol; the trace is
            attached to the exception.
        PreconditionError: If dt does not split [0, t] into at least two whole steps.
    """
    if V.grid != data.grid:
        raise PreconditionError("Potential and data live on different grids")
    steps = 64 if dt is None else _whole_steps(t, dt)
    if steps < 2:
        raise PreconditionError(
            f"The Picard mesh needs at least two steps, dt={dt} gives {steps}"
        )
    times = uniform_times(t, steps)
    free = propagate_series(data, times, params, partition).to_physical()
    current = free.values
    trace = PicardTrace(tolerance=tol)
    for iteration in range(max_iter):
        forcing = TimeSeries(data.grid, Space.PHYSICAL, times, -V.apply(current))
        correction = duhamel_series(forcing, params, partition).to_physical()
        updated = free.values + correction.values
        residual = _relative_change(updated, current)
        trace.residuals.append(residual)
        current = updated
        logger.debug("Picard iteration", iteration=iteration, residual=residual)
        if residual <= tol:
            trace.converged = True
            break
    if not trace.converged:
        logger.warning(
            "Picard iteration did not converge",
            iterations=trace.iterations,
            last_residual=trace.residuals[-1] if trace.residuals else None,
        )
        raise ConvergenceError(
            f"Picard iteration did not reach tol={tol} in {max_iter} iterations "
            f"(smallness of V violated?)",
            trace=trace,
        )
    return TimeSeries(data.grid, Space.PHYSICAL, times, current), trace


def solve_perturbed(
    data: CauchyData,
    V: PotentialField,
    t: float,
    params: LameParams,
    dt: float | None = None,
    max_iter: int = 50,
    tol: float = 1e-10,
    partition: AngularPartition = DEFAULT_PARTITION,
) -> tuple[VectorField, PicardTrace]:
    """u(t) for (d_t^2 - Lame + V) u = 0 with data (f, g), by Picard iteration."""
    series, trace = solve_perturbed_series(data, V, t, params, dt, max_iter, tol, partition)
    u = series.at(len(series) - 1)
    return (u if data.space is Space.PHYSICAL else u.to_frequency()), trace


# -- oracles ------------------------------------------------------------------


def helmholtz_oracle(data: CauchyData, t: float, params: LameParams) -> VectorField:
    """Propagate the Leray parts as scalar waves at c_p and c_s; no rotations involved."""
    grid = data.grid
    xi = grid.wavenumbers()
    k2 = np.sum(xi * xi, axis=0)
    safe = np.where(k2 > 0, k2, 1.0)
    knorm = np.sqrt(k2)
    zero = (Ellipsis,) + (0,) * grid.n

    def split(values: ComplexArray) -> tuple[ComplexArray, ComplexArray]:
        gradient = xi * np.sum(xi * values, axis=0) / safe
        return gradient, values - gradient

    f_p, f_s = split(data.f.to_frequency().values)
    g_p, g_s = split(data.g.to_frequency().values)
    p, s = params.c_p * knorm, params.c_s * knorm
    values = (
        np.cos(t * p) * f_p
        + _tsinc(t, p) * g_p
        + np.cos(t * s) * f_s
        + _tsinc(t, s) * g_s
    )
    values[zero] = data.f.to_frequency().values[zero] + t * data.g.to_frequency().values[zero]
    out = VectorField(grid, Space.FREQUENCY, values)
    return out if data.space is Space.FREQUENCY else out.to_physical()


def first_order_system(xi: ArrayLike, params: LameParams) -> ComplexArray:
    """Generator [[0, I], [-L(xi), 0]] of (u_hat, d_t u_hat)."""
    symbol = lame_symbol_at(xi, params)
    n = symbol.shape[0]
    system = np.zeros((2 * n, 2 * n), dtype=np.complex128)
    system[:n, n:] = np.eye(n)
    system[n:, :n] = -symbol
    return system


def matrix_exp_oracle(
    data: CauchyData, t: float, params: LameParams, xi0: Sequence[int]
) -> ComplexArray:
    """Frequency amplitude u_hat(t, xi0) from the exact 2n-dimensional exponential.

    xi0 is the signed lattice multi-index of the mode.
    """
    grid = data.grid
    index = grid.storage_index(xi0)
    f_hat = data.f.to_frequency().values[(slice(None), *index)]
    g_hat = data.g.to_frequency().values[(slice(None), *index)]
    system = first_order_system(grid.frequency_at(xi0), params)
    state = expm_pade(t * system) @ np.concatenate([f_hat, g_hat])
    return state[: grid.n]


def matrix_exp_solution(data: CauchyData, t: float, params: LameParams) -> VectorField:
    """matrix_exp_oracle summed over every lattice mode."""
    grid = data.grid
    values = np.zeros((grid.n, *grid.shape), dtype=np.complex128)
    half = grid.N // 2
    for k in np.ndindex(*grid.shape):
        signed = [component - grid.N if component >= half else component for component in k]
        values[(slice(None), *k)] = matrix_exp_oracle(data, t, params, signed)
    out = VectorField(grid, Space.FREQUENCY, values)
    return out if data.space is Space.FREQUENCY else out.to_physical()


def wraparound_time(
    grid: Grid, params: LameParams, radius: float, margin_cells: float = 5.0
) -> float:
    """Time before a wave leaving a ball of the given radius reaches the box edge."""
    reach = grid.L / 2 - radius - margin_cells * grid.spacing
    if reach <= 0:
        raise PreconditionError(
            f"Data radius {radius} leaves no room in a box of side {grid.L}"
        )
    return reach / params.max_speed
