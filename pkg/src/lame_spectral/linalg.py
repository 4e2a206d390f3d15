"""
Small dense linear-algebra routines used as independent oracles.

These deliberately avoid LAPACK so that checks against numpy/scipy compare two
different algorithms: a cyclic Jacobi eigensolver for real symmetric matrices
and a scaling-and-squaring Padé matrix exponential.
"""

import math

import numpy as np
import structlog
from numpy.typing import NDArray

from .errors import ConvergenceError, PreconditionError

logger = structlog.get_logger(__name__)


def jacobi_eigh(
    M: NDArray[np.float64],
    tol: float = 1e-14,
    max_sweeps: int = 50,
    symmetry_tol: float = 1e-12,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Args:
        M: Square real symmetric matrix.
        tol: Stop once the off-diagonal Frobenius mass is below tol * ||M||_F.
        max_sweeps: Maximum number of full cyclic sweeps.
        symmetry_tol: Allowed asymmetry, relative to max(1, ||M||_max).

    Returns:
        Eigenvalues sorted descending and the matching orthonormal eigenvectors
        as columns.

    Raises:
        PreconditionError: If M is not square, real or symmetric.
        ConvergenceError: If the sweeps do not reach the tolerance.
    """
    a = np.array(M, dtype=np.float64, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise PreconditionError(f"Expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > symmetry_tol * scale:
        raise PreconditionError("Jacobi oracle requires a symmetric matrix")
    a = 0.5 * (a + a.T)
    size = a.shape[0]
    v = np.eye(size)
    target = tol * float(np.linalg.norm(a))

    def off_diagonal(matrix: NDArray[np.float64]) -> float:
        return float(np.sqrt(np.sum(matrix**2) - np.sum(np.diag(matrix) ** 2)))

    for sweep in range(max_sweeps):
        if off_diagonal(a) <= target:
            break
        for p in range(size - 1):
            for q in range(p + 1, size):
                if a[p, q] == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rotation = np.eye(size)
                rotation[p, p] = c
                rotation[q, q] = c
                rotation[p, q] = s
                rotation[q, p] = -s
                a = rotation.T @ a @ rotation
                a[p, q] = a[q, p] = 0.0
                v = v @ rotation
    else:
        if off_diagonal(a) > target:
            raise ConvergenceError(
                f"Jacobi iteration did not converge in {max_sweeps} sweeps"
            )
    logger.debug("Jacobi converged", size=size, sweeps=sweep)

    eigenvalues = np.diag(a).copy()
    order = np.argsort(-eigenvalues, kind="stable")
    return eigenvalues[order], v[:, order]


def _pade_coefficients(order: int) -> list[float]:
    f = math.factorial
    return [
        f(2 * order - k) * f(order) / (f(2 * order) * f(k) * f(order - k))
        for k in range(order + 1)
    ]


def expm_pade(A: NDArray[np.complex128], order: int = 6, theta: float = 0.5) -> NDArray[np.complex128]:
    """Matrix exponential by scaling and squaring with a diagonal Padé approximant.

    A is scaled by 2^-s until its 1-norm is at most theta, the [order/order]
    approximant D^-1 N is formed, and the result is squared s times.
    """
    if order < 6:
        raise PreconditionError(f"Padé order must be at least 6, got {order}")
    a = np.asarray(A, dtype=np.complex128)
    norm = float(np.max(np.sum(np.abs(a), axis=0))) if a.size else 0.0
    squarings = max(0, math.ceil(math.log2(norm / theta))) if norm > theta else 0
    scaled = a / (2.0**squarings)

    coefficients = _pade_coefficients(order)
    identity = np.eye(a.shape[0], dtype=np.complex128)
    power = identity
    numerator = coefficients[0] * identity
    denominator = coefficients[0] * identity
    for k in range(1, order + 1):
        power = power @ scaled
        numerator = numerator + coefficients[k] * power
        denominator = denominator + ((-1) ** k) * coefficients[k] * power
    result = np.linalg.solve(denominator, numerator)
    for _ in range(squarings):
        result = result @ result
    return result
