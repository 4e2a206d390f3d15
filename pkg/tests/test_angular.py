import math

import numpy as np
import pytest

from src.lame_spectral.angular import (
    DEFAULT_PARTITION,
    AngularPartition,
    phi,
    rotation_field,
    rotation_field_at,
    rotation_to_pole,
    sample_mikhlin,
    smooth_step,
)
from src.lame_spectral.errors import PreconditionError
from src.lame_spectral.models import SignBranch

from .conftest import random_unit


def test_smooth_step_profile():
    x = np.linspace(-0.5, 1.5, 201)
    values = smooth_step(x)
    assert np.all(values[x <= 0] == 0.0)
    assert np.all(values[x >= 1] == 1.0)
    assert np.all(np.diff(values) >= 0)
    assert smooth_step(0.5) == pytest.approx(0.5)


@pytest.mark.parametrize("n", [2, 3])
def test_partition_sums_to_one(n, rng):
    for _ in range(200):
        omega = random_unit(n, rng)
        total = phi(omega, SignBranch.PLUS) + phi(omega, SignBranch.MINUS)
        assert total == pytest.approx(1.0, abs=1e-14)


def test_partition_support_stays_inside_caps():
    # phi_plus vanishes once omega.e1 <= -a_t, which is inside the plus cap
    assert phi([-0.5, math.sqrt(0.75)], SignBranch.PLUS) == 0.0
    assert phi([0.5, math.sqrt(0.75)], SignBranch.MINUS) == 0.0
    assert phi([1.0, 0.0], SignBranch.PLUS) == 1.0


def test_partition_half_width_bounds():
    with pytest.raises(ValueError):
        AngularPartition(half_width=0.8)
    with pytest.raises(ValueError):
        AngularPartition(half_width=0.0)


def test_phi_rejects_non_unit_direction():
    with pytest.raises(PreconditionError):
        phi([1.0, 1.0], SignBranch.PLUS)


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("sign", list(SignBranch))
def test_rotation_maps_direction_to_pole(n, sign, rng):
    pole = np.asarray(sign.pole(n))
    for _ in range(100):
        omega = random_unit(n, rng)
        if sign.sign * omega[0] < -0.7:
            continue
        R = rotation_to_pole(omega, sign)
        np.testing.assert_allclose(R.T @ omega, pole, atol=1e-13)
        np.testing.assert_allclose(R.T @ R, np.eye(n), atol=1e-13)
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-13)


def test_rotation_is_identity_at_pole():
    np.testing.assert_array_equal(rotation_to_pole([1.0, 0.0, 0.0], SignBranch.PLUS), np.eye(3))
    np.testing.assert_array_equal(rotation_to_pole([-1.0, 0.0], SignBranch.MINUS), np.eye(2))


def test_rotation_outside_cap_raises():
    with pytest.raises(PreconditionError, match="cap"):
        rotation_to_pole([-0.9, math.sqrt(1 - 0.81)], SignBranch.PLUS)


def test_rotation_field_at_checks_support():
    with pytest.raises(PreconditionError):
        rotation_field_at([0.0, 0.0], SignBranch.PLUS)
    with pytest.raises(PreconditionError, match="supp"):
        rotation_field_at([-2.0, 0.1], SignBranch.PLUS)
    sample = rotation_field_at([3.0, 4.0], SignBranch.PLUS)
    np.testing.assert_allclose(sample.R.T @ np.array([0.6, 0.8]), [1.0, 0.0], atol=1e-14)


@pytest.mark.parametrize("sign", list(SignBranch))
def test_lattice_rotation_matches_matrices(grid, sign, rng):
    field = rotation_field(grid.wavenumbers(), sign, DEFAULT_PARTITION)
    shape = (grid.n, *grid.shape)
    v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    matrices = field.matrices()
    expected = np.einsum("...ij,j...->i...", matrices, v)
    np.testing.assert_allclose(field.apply(v), expected, atol=1e-12)
    expected_t = np.einsum("...ji,j...->i...", matrices, v)
    np.testing.assert_allclose(field.apply_transpose(v), expected_t, atol=1e-12)
    np.testing.assert_allclose(field.apply_transpose(field.apply(v)), v, atol=1e-12)


def test_lattice_rotation_weight_vanishes_at_origin(grid2):
    field = rotation_field(grid2.wavenumbers(), SignBranch.PLUS)
    assert field.weight[0, 0] == 0.0
    np.testing.assert_array_equal(field.matrices()[0, 0], np.eye(2))


@pytest.mark.parametrize("sign", list(SignBranch))
def test_mikhlin_bounds_are_scale_invariant(sign):
    report = sample_mikhlin(sign, 2, annuli=[1.0, 8.0, 64.0], samples_per_annulus=16, n=3)
    assert report.passed, report.checks
    assert report.statistics["order_0_max"] <= 1.0 + 1e-12
    assert len(report.samples) == 9


@pytest.mark.parametrize(
    "kwargs",
    [
        {"max_order": 3, "annuli": [1.0]},
        {"max_order": 1, "annuli": []},
        {"max_order": 1, "annuli": [0.0, 1.0]},
        {"max_order": 1, "annuli": [1.0], "relative_step": 0.5},
    ],
)
def test_mikhlin_rejects_bad_arguments(kwargs):
    with pytest.raises(PreconditionError):
        sample_mikhlin(SignBranch.PLUS, samples_per_annulus=4, **kwargs)
