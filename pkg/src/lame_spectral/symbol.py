"""
The Lamé symbol and its eigenstructure.

L_z(xi) = (mu |xi|^2 - z) I + (lambda + mu) xi xi^T has the simple eigenvalue
(lambda + 2 mu)|xi|^2 along xi and mu |xi|^2 on xi^perp. Since R_sign(xi)^T maps
xi/|xi| to ±e1, L = R Lambda R^T with Lambda = diag((lambda+2mu)|xi|^2, mu|xi|^2, ...).
"""

from dataclasses import dataclass

import numpy as np
import structlog
from numpy.typing import ArrayLike, NDArray

from .angular import DEFAULT_PARTITION, AngularPartition, RotationSample, rotation_field_at
from .angular import rotation_field as build_rotation_field
from .errors import PreconditionError
from .grid import Grid
from .linalg import jacobi_eigh
from .models import LameParams, SignBranch

logger = structlog.get_logger(__name__)

RealArray = NDArray[np.float64]


@dataclass(frozen=True)
class Diagonalization:
    """R, the diagonal of Lambda and the reconstruction residual at one frequency."""

    rotation: RotationSample
    eigenvalues: RealArray
    residual: float

    @property
    def R(self) -> RealArray:
        return self.rotation.R


def eigenvalues_at(xi: ArrayLike, params: LameParams) -> RealArray:
    """Diagonal of Lambda(xi), P-wave eigenvalue first."""
    xi = np.asarray(xi, dtype=np.float64)
    k2 = float(np.sum(xi * xi))
    n = xi.shape[0]
    return np.array([(params.lam + 2 * params.mu) * k2] + [params.mu * k2] * (n - 1))


def lame_symbol_at(xi: ArrayLike, params: LameParams, z: complex = 0.0) -> NDArray[np.complex128]:
    """Evaluate L_z(xi) = (mu |xi|^2 - z) I + (lambda + mu) xi xi^T."""
    xi = np.asarray(xi, dtype=np.float64)
    n = xi.shape[0]
    k2 = float(np.sum(xi * xi))
    return (params.mu * k2 - z) * np.eye(n, dtype=np.complex128) + (
        params.lam + params.mu
    ) * np.outer(xi, xi)


def lame_symbol_field(xi: RealArray, params: LameParams) -> RealArray:
    """L(xi) at every lattice site, shape (N, ..., N, n, n)."""
    n = xi.shape[0]
    vectors = np.moveaxis(xi, 0, -1)
    k2 = np.sum(vectors * vectors, axis=-1)
    return params.mu * k2[..., None, None] * np.eye(n) + (params.lam + params.mu) * (
        vectors[..., :, None] * vectors[..., None, :]
    )


def diagonalize_at(
    xi: ArrayLike,
    sign: SignBranch,
    params: LameParams,
    partition: AngularPartition = DEFAULT_PARTITION,
) -> Diagonalization:
    """Return R_sign(xi), Lambda(xi) and the relative Frobenius residual."""
    rotation = rotation_field_at(xi, sign, partition)
    eigenvalues = eigenvalues_at(rotation.xi, params)
    symbol = lame_symbol_at(rotation.xi, params).real
    rebuilt = rotation.R @ np.diag(eigenvalues) @ rotation.R.T
    residual = float(np.linalg.norm(rebuilt - symbol) / np.linalg.norm(symbol))
    return Diagonalization(rotation=rotation, eigenvalues=eigenvalues, residual=residual)


def sqrt_symbol_at(
    xi: ArrayLike,
    sign: SignBranch,
    params: LameParams,
    partition: AngularPartition = DEFAULT_PARTITION,
) -> tuple[RealArray, RealArray]:
    """Return (R, sqrt Lambda). At xi = 0 the square root is the zero matrix (R = I)."""
    xi = np.asarray(xi, dtype=np.float64)
    if not np.any(xi):
        return np.eye(xi.shape[0]), np.zeros(xi.shape[0])
    diagonal = diagonalize_at(xi, sign, params, partition)
    return diagonal.R, np.sqrt(diagonal.eigenvalues)


def sqrt_symbol_matrix(
    xi: ArrayLike, sign: SignBranch, params: LameParams
) -> RealArray:
    """R sqrt(Lambda) R^T as a matrix."""
    R, root = sqrt_symbol_at(xi, sign, params)
    return R @ np.diag(root) @ R.T


def leray_projectors_at(xi: ArrayLike) -> tuple[RealArray, RealArray]:
    """Gradient projector xi xi^T/|xi|^2 and its divergence-free complement."""
    xi = np.asarray(xi, dtype=np.float64)
    k2 = float(np.sum(xi * xi))
    if k2 == 0.0:
        raise PreconditionError("Leray projectors are undefined at xi = 0")
    gradient = np.outer(xi, xi) / k2
    return gradient, np.eye(xi.shape[0]) - gradient


def brute_eig_oracle(M: ArrayLike) -> tuple[RealArray, RealArray]:
    """Eigenvalues (descending) and orthonormal eigenvectors by cyclic Jacobi."""
    return jacobi_eigh(np.asarray(M, dtype=np.float64))


def diagonalization_residuals(
    grid: Grid,
    params: LameParams,
    partition: AngularPartition = DEFAULT_PARTITION,
) -> dict[SignBranch, float]:
    """Max relative residual ||R Lambda R^T - L||_F / ||L||_F per branch over the lattice.

    Every nonzero lattice frequency whose direction lies in the branch support
    is included.
    """
    xi = grid.wavenumbers()
    symbol = lame_symbol_field(xi, params)
    k2 = np.sum(xi * xi, axis=0)
    residuals: dict[SignBranch, float] = {}
    for sign in SignBranch:
        field = build_rotation_field(xi, sign, partition)
        active = field.weight > 0
        R = field.matrices()[active]
        values = np.stack(
            [(params.lam + 2 * params.mu) * k2[active]]
            + [params.mu * k2[active]] * (grid.n - 1),
            axis=-1,
        )
        rebuilt = np.einsum("mij,mj,mkj->mik", R, values, R)
        target = symbol[active]
        error = np.linalg.norm(rebuilt - target, axis=(-2, -1)) / np.linalg.norm(
            target, axis=(-2, -1)
        )
        residuals[sign] = float(np.max(error)) if error.size else 0.0
    logger.debug(
        "Diagonalization residuals",
        n=grid.n,
        N=grid.N,
        residuals={sign.value: value for sign, value in residuals.items()},
    )
    return residuals


def branch_overlap_gap(
    grid: Grid,
    params: LameParams,
    partition: AngularPartition = DEFAULT_PARTITION,
) -> float:
    """Max relative gap between the two branch reconstructions where both weights are positive."""
    xi = grid.wavenumbers()
    k2 = np.sum(xi * xi, axis=0)
    plus = build_rotation_field(xi, SignBranch.PLUS, partition)
    minus = build_rotation_field(xi, SignBranch.MINUS, partition)
    overlap = (plus.weight > 0) & (minus.weight > 0)
    if not np.any(overlap):
        return 0.0
    values = np.stack(
        [(params.lam + 2 * params.mu) * k2[overlap]] + [params.mu * k2[overlap]] * (grid.n - 1),
        axis=-1,
    )
    rebuilt = []
    for field in (plus, minus):
        R = field.matrices()[overlap]
        rebuilt.append(np.einsum("mij,mj,mkj->mik", R, values, R))
    scale = np.linalg.norm(rebuilt[0], axis=(-2, -1))
    return float(np.max(np.linalg.norm(rebuilt[0] - rebuilt[1], axis=(-2, -1)) / scale))
