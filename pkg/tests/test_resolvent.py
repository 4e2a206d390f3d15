import math

import numpy as np
import pytest

from src.lame_spectral.errors import PreconditionError, SingularityError
from src.lame_spectral.grid import make_grid
from src.lame_spectral.models import ResolventParams, Space
from src.lame_spectral.resolvent import (
    SpaceTimeField,
    admissible_pq,
    apply_operator,
    apply_resolvent,
    check_floor,
    default_floor,
    divergence_probe,
    gaussian_test_field,
    inverse_identity_error,
    make_spacetime_grid,
    resolvent_multiplier_at,
    resolvent_quotient,
    round_trip_error,
    sobolev_quotient_sweep,
)
from src.lame_spectral.sampling import random_lame_params, random_rotation

from .conftest import random_unit


@pytest.fixture
def st_grid():
    return make_spacetime_grid(make_grid(2, 16, 2 * math.pi), 16, 16.0)


def _random_spacetime(st_grid, rng):
    shape = (st_grid.n, *st_grid.shape)
    return SpaceTimeField(
        st_grid, Space.PHYSICAL, rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    )


@pytest.mark.parametrize("n", [2, 3])
def test_multiplier_inverts_the_operator(n, params, rng):
    for _ in range(30):
        tau = rng.uniform(-10, 10)
        xi = rng.uniform(-5, 5, size=n)
        rp = ResolventParams(a=complex(rng.uniform(-1, 1)), z=complex(rng.uniform(-20, 20), 1.0))
        assert inverse_identity_error(tau, xi, params, rp) <= 1e-12


def test_multiplier_at_zero_frequency(params):
    rp = ResolventParams(z=2.0 + 1.0j)
    M = resolvent_multiplier_at(0.0, np.zeros(3), params, rp)
    np.testing.assert_allclose(M, np.eye(3) / (-(2.0 + 1.0j)))


def test_multiplier_singularity_is_reported(params):
    rp = ResolventParams(z=3.0)
    with pytest.raises(SingularityError) as excinfo:
        resolvent_multiplier_at(0.0, [1.0, 0.0], params, rp)
    assert excinfo.value.distance == 0.0
    assert excinfo.value.xi == (1.0, 0.0)


def test_lattice_round_trip(st_grid, params, rng):
    F = _random_spacetime(st_grid, rng)
    for rp in (ResolventParams(z=1.0j), ResolventParams(a=0.5, z=-3.0 + 0.2j)):
        assert round_trip_error(F, params, rp) <= 1e-12


def test_apply_resolvent_keeps_space(st_grid, params, rng):
    F = _random_spacetime(st_grid, rng)
    rp = ResolventParams(z=2.0j)
    u = apply_resolvent(F, params, rp, floor=0.0)
    assert u.space is Space.PHYSICAL
    back = apply_operator(u, params, rp)
    np.testing.assert_allclose(back.values, F.values, atol=1e-10)


def test_floor_violation_raises(st_grid, params, rng):
    # z = 1 sits on the S branch at |xi| = 1, tau = 0
    rp = ResolventParams(z=1.0 + 1e-6j)
    with pytest.raises(SingularityError) as excinfo:
        apply_resolvent(_random_spacetime(st_grid, rng), params, rp)
    assert excinfo.value.distance < default_floor(st_grid, params)
    assert check_floor(st_grid, params, rp, 0.0) == pytest.approx(1e-6)


def test_spacetime_grid_validation():
    with pytest.raises(PreconditionError):
        make_spacetime_grid(make_grid(2, 16, 1.0), 12, 1.0)
    with pytest.raises(PreconditionError):
        make_spacetime_grid(make_grid(2, 16, 1.0), 16, 0.0)


@pytest.mark.parametrize(
    "p, q, n, expected",
    [
        (1.2, 6.0, 2, True),
        (1.4, 14 / 3, 3, True),
        (1.3, 1 / (1 / 1.3 - 2 / 3), 2, True),
        (1.5, 6.0, 3, False),
        (1.05, 1 / (1 / 1.05 - 2 / 3), 2, False),
        (1.3, 6.0, 2, False),
        (2.0, 2.0, 2, False),
    ],
)
def test_admissible_pq(p, q, n, expected):
    assert admissible_pq(p, q, n) is expected


def test_gaussian_field_has_zero_spatial_mean(st_grid):
    F = gaussian_test_field(st_grid, spatial_width=0.5, time_width=1.0, derivative_axis=1)
    spectrum = F.to_frequency().values
    assert np.max(np.abs(spectrum[:, :, 0, 0])) <= 1e-10 * np.max(np.abs(spectrum))
    assert F.lp_norm(2.0) > 0
    with pytest.raises(PreconditionError):
        gaussian_test_field(st_grid, 0.5, 1.0, derivative_axis=2)


def test_quotient_of_zero_field_is_undefined(st_grid, params):
    zero = SpaceTimeField(st_grid, Space.PHYSICAL, np.zeros((2, *st_grid.shape)))
    with pytest.raises(PreconditionError):
        resolvent_quotient(zero, params, ResolventParams(z=1.0j), 1.2, 6.0)


def test_small_sweep(st_grid, params):
    fields = [
        gaussian_test_field(st_grid, 0.6, 1.5, derivative_axis=axis) for axis in range(2)
    ]
    rps = [ResolventParams(z=z) for z in (10j, 20 + 10j, -20 + 10j)]
    report = sobolev_quotient_sweep(fields, rps, 1.2, 6.0, params, jobs=2)
    assert report.experiment_id == "resolvent_sweep"
    assert report.checks["all_finite"]
    assert report.checks["no_skipped_points"]
    assert len(report.samples) == 6
    assert {sample.descriptor["field"] for sample in report.samples} == {0, 1}
    assert report.statistics["max_min_ratio"] >= 1.0


def test_sweep_skips_singular_points(st_grid, params):
    fields = [gaussian_test_field(st_grid, 0.6, 1.5)]
    rps = [ResolventParams(z=10j), ResolventParams(z=1.0)]
    report = sobolev_quotient_sweep(fields, rps, 1.2, 6.0, params, floor=1e-3)
    assert not report.checks["no_skipped_points"]
    assert len(report.samples) == 1
    assert len(report.notes) == 1
    assert not report.passed


def test_sweep_requires_admissible_exponents(st_grid, params):
    fields = [gaussian_test_field(st_grid, 0.6, 1.5)]
    with pytest.raises(PreconditionError):
        sobolev_quotient_sweep(fields, [ResolventParams(z=1j)], 2.0, 2.0, params)


def test_quotient_grows_as_z_approaches_the_spectrum(st_grid, params):
    fields = [gaussian_test_field(st_grid, 0.6, 1.5)]
    report = divergence_probe(
        fields, z0=1.0, deltas=[1.0, 0.1, 0.01], p=2.0, q=2.0, params=params, min_growth=1.0
    )
    values = report.values()
    assert values[0] < values[1] < values[2]
    assert report.passed
    assert report.statistics["delta_reduction"] == pytest.approx(100.0)


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("a", [0.0, 0.5])
def test_resolvent_multiplier_is_isotropic(n, a, rng):
    params = random_lame_params(rng)
    rp = ResolventParams(a=a, z=2.0 + 10.0j)
    for _ in range(10):
        Q = random_rotation(n, rng)
        xi = rng.uniform(0.2, 5.0) * random_unit(n, rng)
        tau = float(rng.uniform(-3.0, 3.0))
        M = resolvent_multiplier_at(tau, xi, params, rp)
        rotated = resolvent_multiplier_at(tau, Q @ xi, params, rp)
        np.testing.assert_allclose(rotated, Q @ M @ Q.T, rtol=0, atol=1e-11 * np.abs(M).max())
