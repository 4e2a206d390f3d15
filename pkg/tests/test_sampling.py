import numpy as np
import pytest

from src.lame_spectral.errors import PreconditionError
from src.lame_spectral.grid import make_grid
from src.lame_spectral.norms import lr_norm
from src.lame_spectral.sampling import (
    default_envelope,
    delta_field,
    random_lame_params,
    random_rotation,
    shell_random_field,
    smooth_bump,
)


@pytest.mark.parametrize("j", [1, 2, 3])
def test_shell_field_spectrum_stays_in_shell(j, rng):
    grid = make_grid(2, 64, 16.0)
    spectrum = shell_random_field(grid, j, rng).to_frequency().values
    knorm = grid.wavenumber_norm()
    outside = (knorm <= 2.0 ** (j - 2)) | (knorm >= 2.0 ** (j + 2))
    assert np.all(spectrum[:, outside] == 0)
    assert np.any(spectrum != 0)


def test_shell_field_is_seeded(grid2):
    first = shell_random_field(grid2, 1, np.random.default_rng(7))
    second = shell_random_field(grid2, 1, np.random.default_rng(7))
    assert np.array_equal(first.values, second.values)


def test_empty_shell_raises(grid2, rng):
    with pytest.raises(PreconditionError):
        shell_random_field(grid2, 8, rng)


def test_default_envelope_halves_per_shell():
    assert default_envelope(1) == 1.0
    assert default_envelope(3) == 0.25


def test_smooth_bump_support(grid2):
    bump = smooth_bump(grid2, radius=1.0, polarization=[0.0, 2.0])
    distance = grid2.distance(grid2.centre)
    assert np.all(bump.values[:, distance >= 1.0] == 0)
    assert np.all(bump.values[0] == 0)
    assert np.max(np.abs(bump.values[1])) <= 2 * np.exp(-1.0) + 1e-15
    with pytest.raises(PreconditionError):
        smooth_bump(grid2, radius=0.0)
    with pytest.raises(PreconditionError):
        smooth_bump(grid2, polarization=[1.0, 0.0, 0.0])


def test_delta_has_unit_mass(grid):
    assert lr_norm(delta_field(grid), 1.0) == pytest.approx(1.0)


def test_random_lame_params_are_elliptic(rng):
    for _ in range(100):
        params = random_lame_params(rng)
        assert params.mu >= 0.5
        assert params.lam + 2 * params.mu >= 0.25 - 1e-12


@pytest.mark.parametrize("n", [2, 3])
def test_random_rotation_is_special_orthogonal(n, rng):
    Q = random_rotation(n, rng)
    np.testing.assert_allclose(Q.T @ Q, np.eye(n), atol=1e-13)
    assert np.linalg.det(Q) == pytest.approx(1.0)
