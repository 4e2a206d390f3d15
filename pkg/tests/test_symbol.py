import numpy as np
import pytest
import scipy.linalg

from src.lame_spectral.angular import phi
from src.lame_spectral.errors import PreconditionError
from src.lame_spectral.models import SignBranch
from src.lame_spectral.sampling import random_lame_params
from src.lame_spectral.symbol import (
    brute_eig_oracle,
    branch_overlap_gap,
    diagonalization_residuals,
    diagonalize_at,
    eigenvalues_at,
    lame_symbol_at,
    lame_symbol_field,
    leray_projectors_at,
    sqrt_symbol_at,
    sqrt_symbol_matrix,
)

from .conftest import random_unit


def _supported_sign(xi: np.ndarray) -> SignBranch:
    omega = xi / np.linalg.norm(xi)
    return SignBranch.PLUS if phi(omega, SignBranch.PLUS) > 0 else SignBranch.MINUS


@pytest.mark.parametrize("n", [2, 3])
def test_eigenvalues_match_dense_solver(n, params, soft_params, rng):
    for lame in (params, soft_params):
        for _ in range(20):
            xi = 5 * rng.standard_normal(n)
            symbol = lame_symbol_at(xi, lame).real
            expected = np.sort(np.linalg.eigvalsh(symbol))
            np.testing.assert_allclose(
                np.sort(eigenvalues_at(xi, lame)), expected, rtol=1e-12, atol=1e-12
            )


def test_symbol_shift_and_field(grid2, params):
    xi = np.array([1.0, 2.0])
    shifted = lame_symbol_at(xi, params, z=2 + 1j)
    np.testing.assert_allclose(shifted, lame_symbol_at(xi, params) - (2 + 1j) * np.eye(2))
    field = lame_symbol_field(grid2.wavenumbers(), params)
    assert field.shape == (32, 32, 2, 2)
    np.testing.assert_allclose(field[1, 2], lame_symbol_at(xi, params).real)


@pytest.mark.parametrize("n", [2, 3])
def test_pointwise_diagonalization(n, params, soft_params, rng):
    for lame in (params, soft_params):
        for _ in range(50):
            xi = rng.uniform(0.1, 50) * random_unit(n, rng)
            result = diagonalize_at(xi, _supported_sign(xi), lame)
            assert result.residual <= 1e-12
            np.testing.assert_allclose(result.R.T @ result.R, np.eye(n), atol=1e-13)


def test_diagonalization_outside_support_raises(params):
    with pytest.raises(PreconditionError):
        diagonalize_at([-1.0, 0.0], SignBranch.PLUS, params)


def test_lattice_residuals(grid, params, soft_params):
    for lame in (params, soft_params):
        residuals = diagonalization_residuals(grid, lame)
        assert set(residuals) == set(SignBranch)
        assert max(residuals.values()) <= 1e-12


def test_branches_agree_on_overlap(grid, params):
    assert branch_overlap_gap(grid, params) <= 1e-12


@pytest.mark.parametrize("n", [2, 3])
def test_square_root_squares_to_symbol(n, params, rng):
    for _ in range(20):
        xi = rng.uniform(0.5, 10) * random_unit(n, rng)
        root = sqrt_symbol_matrix(xi, _supported_sign(xi), params)
        symbol = lame_symbol_at(xi, params).real
        np.testing.assert_allclose(root @ root, symbol, rtol=1e-12, atol=1e-10)
        np.testing.assert_allclose(root, scipy.linalg.sqrtm(symbol).real, atol=1e-9)


def test_square_root_at_origin(params):
    R, root = sqrt_symbol_at(np.zeros(3), SignBranch.PLUS, params)
    np.testing.assert_array_equal(R, np.eye(3))
    np.testing.assert_array_equal(root, np.zeros(3))


def test_leray_projectors(rng):
    xi = rng.standard_normal(3)
    gradient, solenoidal = leray_projectors_at(xi)
    np.testing.assert_allclose(gradient + solenoidal, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(gradient @ gradient, gradient, atol=1e-14)
    np.testing.assert_allclose(gradient @ xi, xi, atol=1e-14)
    np.testing.assert_allclose(solenoidal @ xi, 0.0, atol=1e-14)
    with pytest.raises(PreconditionError):
        leray_projectors_at([0.0, 0.0])


def test_projectors_split_symbol_into_wave_speeds(params, rng):
    xi = rng.standard_normal(3)
    k2 = float(xi @ xi)
    gradient, solenoidal = leray_projectors_at(xi)
    rebuilt = (params.lam + 2 * params.mu) * k2 * gradient + params.mu * k2 * solenoidal
    np.testing.assert_allclose(rebuilt, lame_symbol_at(xi, params).real, atol=1e-12)


def test_jacobi_oracle_agrees_with_rotation(params, rng):
    xi = np.array([1.0, 2.0, -0.5])
    values, vectors = brute_eig_oracle(lame_symbol_at(xi, params).real)
    np.testing.assert_allclose(values, eigenvalues_at(xi, params), rtol=1e-12)
    p_direction = xi / np.linalg.norm(xi)
    assert abs(vectors[:, 0] @ p_direction) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("n", [2, 3])
def test_symbol_determinant_factorizes(n, rng):
    for _ in range(20):
        params = random_lame_params(rng)
        xi = rng.uniform(0.1, 10.0) * random_unit(n, rng)
        z = complex(rng.uniform(-50.0, 50.0), rng.uniform(-5.0, 5.0))
        k2 = float(xi @ xi)
        expected = ((params.lam + 2 * params.mu) * k2 - z) * (params.mu * k2 - z) ** (n - 1)
        determinant = np.linalg.det(lame_symbol_at(xi, params, z))
        assert abs(determinant - expected) <= 1e-10 * max(abs(expected), 1.0)
