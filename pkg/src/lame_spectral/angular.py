"""
Hemisphere covers, great-circle rotations and the angular partition of unity.

For a unit direction omega in the cap S_sign = {omega : omega.(±e1) >= -1/sqrt 2}
the rotation rho_sign(omega) is the plane rotation carrying the pole a = ±e1 to
omega and fixing span{e1, omega}^perp:

    rho = I + (cos t - 1)(a a^T + b b^T) + sin t (b a^T - a b^T),

with b the normalized component of omega orthogonal to a and t the angle
between them. R_sign(xi) = rho_sign(xi/|xi|). The same great-circle data
(b, cos t, sin t) drives both the single-frequency matrices and the lattice-wide
RotationField used by the propagators.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import structlog
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .errors import PreconditionError
from .models import EstimateReport, Sample, SignBranch

logger = structlog.get_logger(__name__)

RealArray = NDArray[np.float64]

CAP_BOUNDARY = -1.0 / math.sqrt(2.0)
POLE_GUARD = 1e-14
UNIT_TOLERANCE = 1e-10


def _g(x: RealArray) -> RealArray:
    """The C-infinity bump exp(-1/x) for x > 0, zero otherwise."""
    positive = x > 0
    safe = np.where(positive, x, 1.0)
    return np.where(positive, np.exp(-1.0 / safe), 0.0)


def smooth_step(x: ArrayLike) -> RealArray:
    """G(x) = g(x)/(g(x) + g(1-x)): 0 for x <= 0, 1 for x >= 1, smooth between."""
    x = np.asarray(x, dtype=np.float64)
    left = _g(x)
    right = _g(1.0 - x)
    return left / (left + right)


class AngularPartition(BaseModel):
    """Smooth partition {phi_plus, phi_minus} of the unit sphere."""

    model_config = ConfigDict(frozen=True)

    half_width: float = Field(default=0.5, description="Transition half-width a_t")

    @field_validator("half_width")
    @classmethod
    def _check_half_width(cls, value: float) -> float:
        if not 0 < value < 1 / math.sqrt(2):
            raise ValueError(f"Transition half-width must lie in (0, 1/sqrt 2), got {value}")
        return value

    def chi(self, s: ArrayLike) -> RealArray:
        """Transition profile chi(s) = G((s + a_t)/(2 a_t))."""
        s = np.asarray(s, dtype=np.float64)
        return smooth_step((s + self.half_width) / (2 * self.half_width))

    def weight(self, first_component: ArrayLike, sign: SignBranch) -> RealArray:
        """phi_sign evaluated from omega.e1 (vectorized)."""
        return self.chi(sign.sign * np.asarray(first_component, dtype=np.float64))


DEFAULT_PARTITION = AngularPartition()


def _check_unit(omega: RealArray) -> None:
    norm = float(np.sqrt(np.sum(omega * omega)))
    if abs(norm - 1.0) > UNIT_TOLERANCE:
        raise PreconditionError(f"Direction is not a unit vector (|omega| = {norm})")


def phi(
    omega: ArrayLike, sign: SignBranch, partition: AngularPartition = DEFAULT_PARTITION
) -> float:
    """Partition weight phi_sign(omega) = chi(±omega.e1)."""
    omega = np.asarray(omega, dtype=np.float64)
    _check_unit(omega)
    return float(partition.weight(omega[0], sign))


def arc_parameters(
    omega: RealArray, sign: SignBranch
) -> tuple[RealArray, RealArray, RealArray]:
    """Great-circle data (b, cos t, sin t) for unit directions omega[..., n].

    Directions within POLE_GUARD of the pole get the identity (b = 0, t = 0).
    The caller is responsible for the cap constraint.
    """
    s = sign.sign
    along = np.clip(s * omega[..., 0], -1.0, 1.0)
    perp = np.array(omega, dtype=np.float64, copy=True)
    perp[..., 0] = 0.0
    length = np.sqrt(np.sum(perp * perp, axis=-1))
    at_pole = (1.0 - along) < POLE_GUARD
    theta = np.arctan2(length, along)
    cos = np.where(at_pole, 1.0, np.cos(theta))
    sin = np.where(at_pole, 0.0, np.sin(theta))
    safe = np.where(at_pole, 1.0, length)
    b = np.where(at_pole[..., None], 0.0, perp / safe[..., None])
    return b, cos, sin


def rotation_matrices(omega: RealArray, sign: SignBranch) -> RealArray:
    """Batch of rho_sign(omega) matrices, shape omega.shape + (n,)."""
    n = omega.shape[-1]
    b, cos, sin = arc_parameters(omega, sign)
    a = np.zeros(n)
    a[0] = sign.sign
    aa = np.outer(a, a)
    bb = b[..., :, None] * b[..., None, :]
    ba = b[..., :, None] * a[None, :]
    ab = a[:, None] * b[..., None, :]
    return (
        np.eye(n)
        + (cos - 1.0)[..., None, None] * (aa + bb)
        + sin[..., None, None] * (ba - ab)
    )


def rotation_to_pole(omega: ArrayLike, sign: SignBranch) -> RealArray:
    """The rotation rho_sign(omega); its transpose maps omega to ±e1."""
    omega = np.asarray(omega, dtype=np.float64)
    _check_unit(omega)
    if sign.sign * omega[0] < CAP_BOUNDARY - 1e-15:
        raise PreconditionError(
            f"Direction {omega.tolist()} lies outside the {sign.value} cap"
        )
    return rotation_matrices(omega, sign)


@dataclass(frozen=True)
class RotationSample:
    """Rotation R_sign(xi) evaluated at one nonzero frequency."""

    xi: RealArray
    sign: SignBranch
    R: RealArray


def rotation_field_at(
    xi: ArrayLike,
    sign: SignBranch,
    partition: AngularPartition = DEFAULT_PARTITION,
) -> RotationSample:
    """Evaluate R_sign(xi) = rho_sign(xi/|xi|) for xi in supp phi_sign."""
    xi = np.asarray(xi, dtype=np.float64)
    norm = float(np.sqrt(np.sum(xi * xi)))
    if norm == 0.0:
        raise PreconditionError("Rotation field is undefined at xi = 0")
    omega = xi / norm
    if partition.weight(omega[0], sign) <= 0.0:
        raise PreconditionError(
            f"Frequency {xi.tolist()} lies outside supp phi_{sign.value}"
        )
    return RotationSample(xi=xi, sign=sign, R=rotation_to_pole(omega, sign))


class RotationField:
    """Lattice-wide rotation of one branch, applied without materializing matrices.

    Sites outside the branch support (and xi = 0) carry the identity; callers
    weight by phi_sign, which vanishes there.
    """

    def __init__(self, xi: RealArray, sign: SignBranch, partition: AngularPartition):
        n = xi.shape[0]
        norm = np.sqrt(np.sum(xi * xi, axis=0))
        nonzero = norm > 0
        omega = np.moveaxis(xi / np.where(nonzero, norm, 1.0), 0, -1)
        weight = np.where(nonzero, partition.weight(omega[..., 0], sign), 0.0)
        active = weight > 0
        b, cos, sin = arc_parameters(omega, sign)
        self.sign = sign
        self.n = n
        self.weight = weight
        self.b = np.moveaxis(np.where(active[..., None], b, 0.0), -1, 0)
        self.cos = np.where(active, cos, 1.0)
        self.sin = np.where(active, sin, 0.0)

    def _apply(self, v: NDArray[np.complex128], transpose: bool) -> NDArray[np.complex128]:
        s = self.sign.sign
        along = s * v[0]
        across = sum(self.b[k] * v[k] for k in range(1, self.n))
        turn = -self.sin if transpose else self.sin
        on_b = (self.cos - 1.0) * across + turn * along
        on_a = (self.cos - 1.0) * along - turn * across
        out = np.array(v, copy=True)
        out[0] = v[0] + s * on_a
        for k in range(1, self.n):
            out[k] = v[k] + self.b[k] * on_b
        return out

    def apply(self, v: NDArray[np.complex128]) -> NDArray[np.complex128]:
        """R v per site; v has shape (n, *batch, N, ..., N)."""
        return self._apply(v, transpose=False)

    def apply_transpose(self, v: NDArray[np.complex128]) -> NDArray[np.complex128]:
        """R^T v per site."""
        return self._apply(v, transpose=True)

    def matrices(self) -> RealArray:
        """Per-site matrices, shape (N, ..., N, n, n)."""
        b = np.moveaxis(self.b, 0, -1)
        a = np.zeros(self.n)
        a[0] = self.sign.sign
        bb = b[..., :, None] * b[..., None, :]
        ba = b[..., :, None] * a[None, :]
        ab = a[:, None] * b[..., None, :]
        return (
            np.eye(self.n)
            + (self.cos - 1.0)[..., None, None] * (np.outer(a, a) + bb)
            + self.sin[..., None, None] * (ba - ab)
        )


def rotation_field(
    xi: RealArray, sign: SignBranch, partition: AngularPartition = DEFAULT_PARTITION
) -> RotationField:
    """Build the RotationField of one branch over a lattice of frequencies."""
    return RotationField(np.asarray(xi, dtype=np.float64), sign, partition)


def _sample_directions(
    n: int,
    count: int,
    sign: SignBranch,
    partition: AngularPartition,
    rng: np.random.Generator,
) -> RealArray:
    directions: list[RealArray] = []
    while len(directions) < count:
        candidate = rng.standard_normal(n)
        candidate /= np.sqrt(np.sum(candidate * candidate))
        if partition.weight(candidate[0], sign) > 0:
            directions.append(candidate)
    return np.array(directions)


def _derivative_sup(
    xi: RealArray, sign: SignBranch, order: int, step: RealArray
) -> RealArray:
    """Sup over entries and multi-indices of |xi|^order |d^alpha r_jk| (per sample)."""
    n = xi.shape[-1]
    norm = np.sqrt(np.sum(xi * xi, axis=-1))
    eye = np.eye(n)

    def R(points: RealArray) -> RealArray:
        length = np.sqrt(np.sum(points * points, axis=-1, keepdims=True))
        return rotation_matrices(points / length, sign)

    h = step[:, None]
    if order == 0:
        return np.max(np.abs(R(xi)), axis=(-2, -1))
    best = np.zeros(xi.shape[0])
    if order == 1:
        for k in range(n):
            diff = (R(xi + h * eye[k]) - R(xi - h * eye[k])) / (2 * step[:, None, None])
            best = np.maximum(best, norm * np.max(np.abs(diff), axis=(-2, -1)))
        return best
    for k in range(n):
        for m in range(k, n):
            if k == m:
                diff = (R(xi + h * eye[k]) - 2 * R(xi) + R(xi - h * eye[k])) / (
                    step[:, None, None] ** 2
                )
            else:
                diff = (
                    R(xi + h * (eye[k] + eye[m]))
                    - R(xi + h * (eye[k] - eye[m]))
                    - R(xi - h * (eye[k] - eye[m]))
                    + R(xi - h * (eye[k] + eye[m]))
                ) / (4 * step[:, None, None] ** 2)
            best = np.maximum(best, norm**2 * np.max(np.abs(diff), axis=(-2, -1)))
    return best


def sample_mikhlin(
    sign: SignBranch,
    max_order: int,
    annuli: Sequence[float],
    samples_per_annulus: int,
    n: int = 3,
    seed: int = 0,
    partition: AngularPartition = DEFAULT_PARTITION,
    relative_step: float = 1e-4,
    stability: float = 1.5,
) -> EstimateReport:
    """Sample the scaled derivative bounds |xi|^|alpha| |d^alpha r_jk(xi)|.

    The same directions are reused on every annulus, so exact degree-zero
    homogeneity makes the per-annulus sups agree up to finite-difference error.

    Raises:
        PreconditionError: on an unsupported order, a non-positive annulus or a
            degenerate step.
    """
    if not 0 <= max_order <= 2:
        raise PreconditionError(f"max_order must be 0, 1 or 2, got {max_order}")
    if not annuli or any(scale <= 0 for scale in annuli):
        raise PreconditionError("Annuli must be positive scales")
    if not 0 < relative_step < 1e-2:
        raise PreconditionError(f"Degenerate finite-difference step {relative_step}")
    rng = np.random.default_rng(seed)
    directions = _sample_directions(n, samples_per_annulus, sign, partition, rng)

    samples: list[Sample] = []
    statistics: dict[str, float] = {}
    checks: dict[str, bool] = {}
    for order in range(max_order + 1):
        sups = []
        for scale in annuli:
            xi = scale * directions
            step = relative_step * np.full(len(xi), float(scale))
            sup = float(np.max(_derivative_sup(xi, sign, order, step)))
            sups.append(sup)
            samples.append(
                Sample(descriptor={"order": order, "annulus": float(scale)}, value=sup)
            )
        ratio = max(sups) / min(sups) if min(sups) > 0 else (1.0 if max(sups) == 0 else math.inf)
        statistics[f"order_{order}_max"] = max(sups)
        statistics[f"order_{order}_ratio"] = ratio
        checks[f"order_{order}_stable"] = ratio <= stability and math.isfinite(max(sups))
    checks["order_0_bounded"] = statistics["order_0_max"] <= 1 + 1e-6

    logger.info(
        "Sampled Mikhlin bounds",
        sign=sign.value,
        max_order=max_order,
        statistics=statistics,
    )
    return EstimateReport.from_checks(
        experiment_id=f"mikhlin-{sign.value}",
        checks=checks,
        samples=samples,
        statistics=statistics,
        tolerances={"stability": stability},
        parameters={
            "sign": sign.value,
            "n": n,
            "max_order": max_order,
            "annuli": list(annuli),
            "samples_per_annulus": samples_per_annulus,
            "seed": seed,
        },
    )
