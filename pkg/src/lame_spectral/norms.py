"""
Norms and exponent bookkeeping.

Every spatial integral is a Riemann sum with the uniform cell weight (L/N)^n,
which on the torus coincides with the trapezoid rule. Outer time integrals use
trapezoid weights on a uniform mesh, exact for constants.

The pair classifier encodes the admissible and acceptable definitions literally.
They overlap but do not nest at every boundary pair: admissible pairs with
q = inf and r > 2 are not acceptable, because acceptability asks for q < inf.
pair_properties exposes the three flags so callers can report such exceptions.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.special
import structlog
from numpy.typing import ArrayLike
from pydantic import ValidationError

from .config import config
from .errors import PreconditionError
from .grid import Grid, RealArray, VectorField
from .models import ExponentTuple, InhomogeneousCheck, PairClass, Space
from .propagator import PotentialField, TimeSeries

logger = structlog.get_logger(__name__)

EXPONENT_TOLERANCE = 1e-12
MEAN_TOLERANCE = 1e-12


def _check_exponent(name: str, value: float) -> None:
    if math.isnan(value) or value < 1:
        raise PreconditionError(f"Exponent {name}={value} outside [1, inf]")


def exponent_tuple(
    n: int, q: float, r: float, q_dual: float | None = None, r_dual: float | None = None
) -> ExponentTuple:
    """Validated exponents of one estimate; bad values raise PreconditionError."""
    try:
        return ExponentTuple(n=n, q=q, r=r, q_dual=q_dual, r_dual=r_dual)
    except ValidationError as e:
        raise PreconditionError(
            "; ".join(str(error["msg"]).removeprefix("Value error, ") for error in e.errors())
        ) from e


def reciprocal(value: float) -> float:
    """1/value with 1/inf = 0."""
    return 0.0 if math.isinf(value) else 1.0 / value


def conjugate(p: float) -> float:
    """Hölder conjugate p' with 1' = inf and inf' = 1."""
    _check_exponent("p", p)
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1)


def ball_volume(n: int) -> float:
    """Volume omega_n of the unit ball in R^n."""
    return float(np.pi ** (n / 2) / scipy.special.gamma(n / 2 + 1))


@dataclass(frozen=True, eq=False)
class WeightField:
    """Nonnegative scalar weight on a grid, typically |V(x)|."""

    grid: Grid
    values: RealArray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.shape != self.grid.shape:
            raise PreconditionError(f"Weight shape {values.shape} != {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise PreconditionError("Weight has non-finite entries")
        if np.any(values < 0):
            raise PreconditionError("Weight must be nonnegative")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def from_potential(cls, V: PotentialField) -> "WeightField":
        return cls(V.grid, V.magnitude())


# -- Lebesgue norms -----------------------------------------------------------


def spacetime_norm(values: ArrayLike, r: float, cell: float) -> float:
    """Vector L^r norm of component-first samples with Riemann weight cell.

    For r < inf this is (sum_j ||v_j||_r^r)^(1/r); for r = inf the largest modulus.
    The sample axes after the component axis may span space or space-time.
    """
    _check_exponent("r", r)
    modulus = np.abs(np.asarray(values))
    if math.isinf(r):
        return float(np.max(modulus)) if modulus.size else 0.0
    peak = float(np.max(modulus)) if modulus.size else 0.0
    if peak == 0.0:
        return 0.0
    # scaled by the peak so large r does not overflow
    return peak * float(cell * np.sum((modulus / peak) ** r)) ** (1.0 / r)


def lr_norm(f: VectorField, r: float) -> float:
    """Vector L^r norm of a physical-space field."""
    f.require(Space.PHYSICAL)
    return spacetime_norm(f.values, r, f.grid.cell_volume)


def time_weights(count: int, dt: float) -> RealArray:
    """Trapezoid weights for count samples spaced dt apart.

    This is the uniform Riemann sum with half weights at both ends, so a
    field constant on [0, T] integrates to exactly T.
    """
    if count < 2:
        raise PreconditionError("A finite time exponent needs at least two snapshots")
    if not dt > 0:
        raise PreconditionError(f"Time step must be positive, got {dt}")
    weights = np.full(count, dt)
    weights[0] = weights[-1] = dt / 2
    return weights


def _require_step(dt: float | None) -> float:
    if dt is None:
        raise PreconditionError("A sequence of snapshots needs dt for a finite time exponent")
    return dt


def _outer(inner: RealArray, q: float, dt: float | None) -> float:
    if math.isinf(q):
        return float(np.max(inner))
    weights = time_weights(inner.size, _require_step(dt))
    peak = float(np.max(inner))
    if peak == 0.0:
        return 0.0
    return peak * float(np.sum(weights * (inner / peak) ** q)) ** (1.0 / q)


def _as_series(
    u: TimeSeries | Sequence[VectorField], dt: float | None
) -> tuple[list[VectorField], float | None]:
    if isinstance(u, TimeSeries):
        return u.to_physical().fields(), u.dt if dt is None else dt
    return [f.to_physical() for f in u], dt


def mixed_norm(
    u: TimeSeries | Sequence[VectorField], q: float, r: float, dt: float | None = None
) -> float:
    """|| ||u(t)||_{L^r} ||_{L^q_t} over a uniform mesh, trapezoid rule in time.

    A TimeSeries carries its own step; a plain sequence needs dt unless q = inf.

    Raises:
        PreconditionError: On an empty sequence, a finite q with fewer than
            two snapshots, or a plain sequence without dt for finite q.
    """
    _check_exponent("q", q)
    fields, step = _as_series(u, dt)
    if not fields:
        raise PreconditionError("mixed_norm of an empty sequence")
    inner = np.array([lr_norm(f, r) for f in fields])
    return _outer(inner, q, step)


def sobolev_multiplier(grid: Grid, s: float) -> RealArray:
    """|xi|^s with the value at xi = 0 set to 0 (1 when s = 0)."""
    knorm = grid.wavenumber_norm()
    if s == 0:
        return np.ones(grid.shape)
    out = np.zeros(grid.shape)
    nonzero = knorm > 0
    out[nonzero] = knorm[nonzero] ** s
    return out


def sobolev_norm(f: VectorField, s: float, r: float = 2.0) -> float:
    """Homogeneous Sobolev norm || |D|^s f ||_{L^r}.

    Raises:
        PreconditionError: For s < 0 when the mean of f does not vanish.
    """
    _check_exponent("r", r)
    F = f.to_frequency().values
    zero = (slice(None),) + (0,) * f.grid.n
    if s < 0:
        scale = float(np.max(np.abs(F))) if F.size else 0.0
        if float(np.max(np.abs(F[zero]))) > MEAN_TOLERANCE * max(scale, 1e-300):
            raise PreconditionError("Negative-order Sobolev norm of a field with nonzero mean")
    weighted = sobolev_multiplier(f.grid, s) * F
    if r == 2:
        scale = f.grid.cell_volume / f.grid.sites
        return float(np.sqrt(scale * np.sum(np.abs(weighted) ** 2)))
    return lr_norm(VectorField(f.grid, Space.FREQUENCY, weighted).to_physical(), r)


def mixed_sobolev_norm(
    u: TimeSeries | Sequence[VectorField], q: float, r: float, s: float, dt: float | None = None
) -> float:
    """|| ||u(t)||_{H^s_r} ||_{L^q_t}, the norm of the perturbed Strichartz estimate."""
    _check_exponent("q", q)
    fields, step = _as_series(u, dt)
    if not fields:
        raise PreconditionError("mixed_sobolev_norm of an empty sequence")
    inner = np.array([sobolev_norm(f, s, r) for f in fields])
    return _outer(inner, q, step)


def relative_l2(f: VectorField, reference: VectorField) -> float:
    """||f - reference||_2 / ||reference||_2, computed from the values in either space."""
    f.check_compatible(reference)
    scale = float(np.linalg.norm(reference.values))
    difference = float(np.linalg.norm(f.values - reference.values))
    return difference / scale if scale > 0 else difference


def weighted_l2(
    u: TimeSeries | Sequence[VectorField], w: WeightField, dt: float | None = None
) -> float:
    """(int int w(x) |u(t, x)|^2 dx dt)^(1/2) with trapezoid time weights."""
    fields, step = _as_series(u, dt)
    if not fields:
        raise PreconditionError("weighted_l2 of an empty sequence")
    if fields[0].grid != w.grid:
        raise PreconditionError("Weight and field live on different grids")
    weights = time_weights(len(fields), _require_step(step))
    cell = w.grid.cell_volume
    total = sum(
        weight * cell * float(np.sum(w.values * np.sum(np.abs(f.values) ** 2, axis=0)))
        for weight, f in zip(weights, fields, strict=True)
    )
    return math.sqrt(total)


# -- exponent classification --------------------------------------------------


@dataclass(frozen=True)
class PairProperties:
    """The three exponent-pair flags, each by its own definition."""

    admissible: bool
    sharp: bool
    acceptable: bool

    @property
    def nests(self) -> bool:
        """sharp implies admissible implies acceptable."""
        return (not self.sharp or self.admissible) and (not self.admissible or self.acceptable)


def pair_properties(q: float, r: float, n: int) -> PairProperties:
    _check_exponent("q", q)
    _check_exponent("r", r)
    inv_q, inv_r = reciprocal(q), reciprocal(r)

    admissible_bound = (n - 1) / 2 * (0.5 - inv_r)
    admissible = (
        q >= 2
        and r >= 2
        and not math.isinf(r)
        and not (q == 2 and math.isinf(r) and n == 3)
        and inv_q <= admissible_bound + EXPONENT_TOLERANCE
    )
    sharp = admissible and math.isclose(inv_q, admissible_bound, abs_tol=EXPONENT_TOLERANCE)

    acceptable = (
        not math.isinf(q) and r >= 2 and inv_q < (n - 1) * (0.5 - inv_r) - EXPONENT_TOLERANCE
    ) or (math.isinf(q) and r == 2)
    return PairProperties(admissible=admissible, sharp=sharp, acceptable=acceptable)


def classify_pair(q: float, r: float, n: int) -> PairClass:
    """Strongest class of (q, r): sharp admissible, admissible, acceptable or none."""
    flags = pair_properties(q, r, n)
    if flags.sharp:
        return PairClass.SHARP_ADMISSIBLE
    if flags.admissible:
        return PairClass.ADMISSIBLE
    if flags.acceptable:
        return PairClass.ACCEPTABLE_ONLY
    return PairClass.NOT_ACCEPTABLE


def check_inhomogeneous_conditions(
    q: float, r: float, q_dual: float, r_dual: float, n: int
) -> InhomogeneousCheck:
    """Conditions under which the inhomogeneous estimate holds for (q, r), (q~, r~)."""
    return check_inhomogeneous(exponent_tuple(n, q, r, q_dual, r_dual))


def check_inhomogeneous(exponents: ExponentTuple) -> InhomogeneousCheck:
    """Check the inhomogeneous conditions for an exponent tuple with both pairs.

    Returns a structured result listing every failed condition, plus the
    midpoint pair of the two reciprocal points and whether it is sharp.
    """
    if exponents.q_dual is None or exponents.r_dual is None:
        raise PreconditionError("The inhomogeneous conditions need the dual pair (q~, r~)")
    n, q, r = exponents.n, exponents.q, exponents.r
    q_dual, r_dual = exponents.q_dual, exponents.r_dual
    reasons: list[str] = []
    if not pair_properties(q, r, n).acceptable:
        reasons.append("(q, r) is not acceptable")
    if not pair_properties(q_dual, r_dual, n).acceptable:
        reasons.append("(q~, r~) is not acceptable")
    if math.isinf(r) or math.isinf(r_dual):
        reasons.append("r, r~ < inf required")

    inv_q, inv_r = reciprocal(q), reciprocal(r)
    inv_qd, inv_rd = reciprocal(q_dual), reciprocal(r_dual)
    time_sum = inv_q + inv_qd
    if not math.isclose(
        time_sum, (n - 1) / 2 * (1 - inv_r - inv_rd), abs_tol=EXPONENT_TOLERANCE
    ):
        reasons.append("gap condition 1/q + 1/q~ = (n-1)/2 (1 - 1/r - 1/r~) fails")

    if n > 3:
        tol = EXPONENT_TOLERANCE
        if time_sum < 1 - tol:
            if (n - 3) * inv_r > (n - 1) * inv_rd + tol:
                reasons.append("(n-3)/r <= (n-1)/r~ fails")
            if (n - 3) * inv_rd > (n - 1) * inv_r + tol:
                reasons.append("(n-3)/r~ <= (n-1)/r fails")
        elif math.isclose(time_sum, 1.0, abs_tol=tol):
            if not (n - 3) * inv_r < (n - 1) * inv_rd - tol:
                reasons.append("(n-3)/r < (n-1)/r~ fails")
            if not (n - 3) * inv_rd < (n - 1) * inv_r - tol:
                reasons.append("(n-3)/r~ < (n-1)/r fails")
            if inv_r > inv_q + tol:
                reasons.append("1/r <= 1/q fails")
            if inv_rd > inv_qd + tol:
                reasons.append("1/r~ <= 1/q~ fails")
        else:
            reasons.append("1/q + 1/q~ > 1: no side condition covers this case")

    mid_q, mid_r = time_sum / 2, (inv_r + inv_rd) / 2
    midpoint_sharp = pair_properties(
        math.inf if mid_q == 0 else 1 / mid_q, math.inf if mid_r == 0 else 1 / mid_r, n
    ).sharp
    return InhomogeneousCheck(
        ok=not reasons, reasons=reasons, midpoint=(mid_q, mid_r), midpoint_sharp=midpoint_sharp
    )


# -- Fefferman-Phong ----------------------------------------------------------


def dyadic_radii(grid: Grid) -> list[float]:
    """L/4, L/8, ... down to two grid cells."""
    radii = []
    radius = grid.L / 4
    while radius >= 2 * grid.spacing:
        radii.append(radius)
        radius /= 2
    return radii


def ball_integrals(grid: Grid, density: RealArray, radius: float) -> RealArray:
    """int_{B(c, radius)} density for every lattice centre c, by circular convolution."""
    ball = (grid.distance((0.0,) * grid.n) < radius).astype(np.float64)
    spectrum = scipy.fft.fftn(density, workers=config.fft_workers) * scipy.fft.fftn(
        ball, workers=config.fft_workers
    )
    sums = scipy.fft.ifftn(spectrum, workers=config.fft_workers).real
    return np.clip(grid.cell_volume * sums, 0.0, None)


def fp_norm_estimate(
    V: PotentialField,
    p: float,
    centers: int = 64,
    radii: Sequence[float] | None = None,
    seed: int = 0,
) -> float:
    """Sampled lower estimate of sup_B r^(2-n/p) (int_B |V|^p)^(1/p).

    The sup runs over balls centred at `centers` random lattice points, always
    including the peak of |V|, and over the given radii (dyadic up to L/4 by
    default). The true norm is a sup over all balls, so this is a lower bound.
    """
    grid = V.grid
    n = grid.n
    if not 1 <= p <= n / 2:
        raise PreconditionError(f"Fefferman-Phong exponent p={p} outside [1, n/2]")
    radii = list(radii) if radii is not None else dyadic_radii(grid)
    if not radii or any(radius <= 0 or radius > grid.L / 4 for radius in radii):
        raise PreconditionError("Radii must lie in (0, L/4]")
    density = V.magnitude() ** p
    if not np.any(density):
        return 0.0
    rng = np.random.default_rng(seed)
    sampled = rng.choice(grid.sites, size=min(centers, grid.sites), replace=False)
    flat = np.unique(np.append(sampled, np.argmax(density)))
    best = 0.0
    for radius in radii:
        integrals = ball_integrals(grid, density, radius).reshape(-1)[flat]
        value = radius ** (2 - n / p) * float(np.max(integrals)) ** (1 / p)
        best = max(best, value)
    logger.debug("Fefferman-Phong estimate", p=p, radii=len(radii), estimate=best)
    return best
