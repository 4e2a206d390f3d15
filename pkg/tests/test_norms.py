import math

import numpy as np
import pytest

from src.lame_spectral.errors import PreconditionError
from src.lame_spectral.grid import VectorField, make_grid
from src.lame_spectral.models import ExponentTuple, PairClass, Space
from src.lame_spectral.norms import (
    WeightField,
    ball_volume,
    check_inhomogeneous,
    check_inhomogeneous_conditions,
    classify_pair,
    conjugate,
    dyadic_radii,
    exponent_tuple,
    fp_norm_estimate,
    lr_norm,
    mixed_norm,
    mixed_sobolev_norm,
    pair_properties,
    sobolev_norm,
    time_weights,
    weighted_l2,
)
from src.lame_spectral.propagator import PotentialField, TimeSeries, uniform_times
from src.lame_spectral.sampling import plane_mode, random_field


@pytest.mark.parametrize(
    "p, expected", [(1.0, math.inf), (2.0, 2.0), (4.0, 4 / 3), (math.inf, 1.0), (1.5, 3.0)]
)
def test_conjugate(p, expected):
    assert conjugate(p) == pytest.approx(expected)


def test_conjugate_rejects_small_exponent():
    with pytest.raises(PreconditionError):
        conjugate(0.5)


def test_ball_volume():
    assert ball_volume(2) == pytest.approx(math.pi)
    assert ball_volume(3) == pytest.approx(4 * math.pi / 3)


def _constant(grid, value):
    values = np.zeros((grid.n, *grid.shape), dtype=np.complex128)
    values[0] = value
    return VectorField(grid, Space.PHYSICAL, values)


@pytest.mark.parametrize("r", [1.0, 2.0, 3.5, math.inf])
def test_lr_norm_of_constant(grid, r):
    f = _constant(grid, 2.0)
    expected = 2.0 if math.isinf(r) else 2.0 * grid.volume ** (1 / r)
    assert lr_norm(f, r) == pytest.approx(expected, rel=1e-12)


def test_lr_norm_needs_physical_field(grid2):
    with pytest.raises(PreconditionError):
        lr_norm(_constant(grid2, 1.0).to_frequency(), 2.0)


def test_lr_norm_large_exponent_does_not_overflow(grid2):
    assert lr_norm(_constant(grid2, 1e10), 400.0) == pytest.approx(
        1e10 * grid2.volume ** (1 / 400), rel=1e-10
    )


NORM_EXPONENTS = [1.0, 1.5, 2.0, 4.0, math.inf]


@pytest.mark.parametrize("r", NORM_EXPONENTS)
def test_lr_norm_is_a_norm(grid, rng, r):
    f, g = random_field(grid, rng), random_field(grid, rng)
    c = complex(rng.standard_normal(), rng.standard_normal())
    assert lr_norm(c * f, r) == pytest.approx(abs(c) * lr_norm(f, r), rel=1e-12)
    assert lr_norm(f + g, r) <= (lr_norm(f, r) + lr_norm(g, r)) * (1 + 1e-12)


@pytest.mark.parametrize("q, r", [(1.0, 2.0), (2.0, 4.0), (4.0, 1.5), (math.inf, 3.0)])
def test_mixed_norm_is_a_norm(grid2, rng, q, r):
    u = [random_field(grid2, rng) for _ in range(5)]
    v = [random_field(grid2, rng) for _ in range(5)]
    c = -2.5j
    scaled = [c * f for f in u]
    summed = [f + g for f, g in zip(u, v, strict=True)]
    norm_u, norm_v = mixed_norm(u, q, r, dt=0.1), mixed_norm(v, q, r, dt=0.1)
    assert mixed_norm(scaled, q, r, dt=0.1) == pytest.approx(2.5 * norm_u, rel=1e-12)
    assert mixed_norm(summed, q, r, dt=0.1) <= (norm_u + norm_v) * (1 + 1e-12)


@pytest.mark.parametrize("s, r", [(0.0, 2.0), (1.0, 2.0), (0.5, 4.0), (1.5, 1.5)])
def test_sobolev_norm_is_a_seminorm(grid2, rng, s, r):
    f, g = random_field(grid2, rng), random_field(grid2, rng)
    assert sobolev_norm(3.0 * f, s, r) == pytest.approx(3.0 * sobolev_norm(f, s, r), rel=1e-12)
    assert sobolev_norm(f + g, s, r) <= (sobolev_norm(f, s, r) + sobolev_norm(g, s, r)) * (
        1 + 1e-12
    )


def test_mixed_norm_of_stationary_series(grid2):
    f = _constant(grid2, 1.0)
    times = uniform_times(2.0, 8)
    series = TimeSeries.from_fields(times, [f] * len(times))
    spatial = lr_norm(f, 4.0)
    assert mixed_norm(series, 4.0, 4.0) == pytest.approx(2.0 ** 0.25 * spatial, rel=1e-12)
    assert mixed_norm(series, math.inf, 4.0) == pytest.approx(spatial)
    assert mixed_norm([f], math.inf, 2.0) == pytest.approx(lr_norm(f, 2.0))
    with pytest.raises(PreconditionError):
        mixed_norm([f], 2.0, 2.0, dt=0.1)
    with pytest.raises(PreconditionError):
        mixed_norm([], math.inf, 2.0)


def test_mixed_norm_of_plain_sequence_needs_dt(grid2):
    f = _constant(grid2, 1.0)
    with pytest.raises(PreconditionError, match="needs dt"):
        mixed_norm([f, f], 2.0, 2.0)
    assert mixed_norm([f, f], 2.0, 2.0, dt=1.0) == pytest.approx(lr_norm(f, 2.0), rel=1e-12)


def test_trapezoid_integrates_constant_exactly(grid2):
    f = _constant(grid2, 1.0)
    times = uniform_times(3.0, 7)
    series = TimeSeries.from_fields(times, [f] * len(times))
    assert mixed_norm(series, 1.0, 2.0) == pytest.approx(3.0 * lr_norm(f, 2.0), rel=1e-12)


def test_time_weights():
    weights = time_weights(5, 0.25)
    np.testing.assert_allclose(weights, [0.125, 0.25, 0.25, 0.25, 0.125])
    with pytest.raises(PreconditionError):
        time_weights(1, 0.25)


@pytest.mark.parametrize("s", [-1.0, -0.5, 0.0, 0.5, 2.0])
def test_sobolev_norm_of_plane_mode(grid2, s):
    k = (3, -1)
    f = plane_mode(grid2, k)
    size = float(np.linalg.norm(grid2.frequency_at(k)))
    expected = size**s * math.sqrt(grid2.volume)
    assert sobolev_norm(f, s) == pytest.approx(expected, rel=1e-12)


def test_sobolev_norm_in_lr_matches_direct_derivative(grid2):
    f = plane_mode(grid2, (2, 0))
    assert sobolev_norm(f, 1.0, r=4.0) == pytest.approx(2.0 * lr_norm(f, 4.0), rel=1e-10)


def test_negative_sobolev_norm_requires_zero_mean(grid2):
    with pytest.raises(PreconditionError, match="mean"):
        sobolev_norm(_constant(grid2, 1.0), -0.5)
    assert sobolev_norm(VectorField.zeros(grid2), -0.5) == 0.0


def test_mixed_sobolev_norm(grid2):
    f = plane_mode(grid2, (1, 1))
    times = uniform_times(1.0, 4)
    series = TimeSeries.from_fields(times, [f] * len(times))
    assert mixed_sobolev_norm(series, 2.0, 2.0, 1.0) == pytest.approx(
        sobolev_norm(f, 1.0), rel=1e-12
    )


def test_weighted_l2(grid2):
    f = _constant(grid2, 1.0)
    times = uniform_times(3.0, 6)
    series = TimeSeries.from_fields(times, [f] * len(times))
    weight = WeightField(grid2, np.full(grid2.shape, 4.0))
    assert weighted_l2(series, weight) == pytest.approx(math.sqrt(4.0 * grid2.volume * 3.0))
    with pytest.raises(PreconditionError):
        WeightField(grid2, -np.ones(grid2.shape))


def test_weight_from_potential(grid2):
    V = PotentialField.scalar(grid2, -3.0)
    np.testing.assert_allclose(WeightField.from_potential(V).values, 3.0)


@pytest.mark.parametrize(
    "q, r, n, expected",
    [
        (4.0, 4.0, 3, PairClass.SHARP_ADMISSIBLE),
        (math.inf, 2.0, 3, PairClass.SHARP_ADMISSIBLE),
        (math.inf, 2.0, 2, PairClass.SHARP_ADMISSIBLE),
        (6.0, 6.0, 2, PairClass.SHARP_ADMISSIBLE),
        (8.0, 4.0, 3, PairClass.ADMISSIBLE),
        (math.inf, 4.0, 3, PairClass.ADMISSIBLE),
        (2.0, math.inf, 3, PairClass.ACCEPTABLE_ONLY),
        (4.0, math.inf, 2, PairClass.ACCEPTABLE_ONLY),
        (2.0, 8.0, 3, PairClass.ACCEPTABLE_ONLY),
        (1.0, 2.0, 3, PairClass.NOT_ACCEPTABLE),
        (4.0, 2.5, 2, PairClass.NOT_ACCEPTABLE),
    ],
)
def test_classify_pair(q, r, n, expected):
    assert classify_pair(q, r, n) is expected


@pytest.mark.parametrize("n", [2, 3])
def test_sharp_implies_admissible_implies_acceptable_for_finite_time(n):
    for q in (2.0, 3.0, 4.0, 8.0, 16.0):
        for r in (2.0, 3.0, 4.0, 6.0, 10.0, 30.0):
            assert pair_properties(q, r, n).nests


INHOMOGENEOUS_CASES = [
    (3, 4.0, 4.0, 4.0, 4.0, True),
    (3, 3.0, 6.0, 3.0, 6.0, True),
    (3, math.inf, 2.0, math.inf, 2.0, True),
    (3, 4.0, 4.0, 2.0, 4.0, False),
    (3, 4.0, math.inf, 4.0, 4.0, False),
    (3, 1.5, 4.0, 4.0, 4.0, False),
    (5, 2.0, 4.0, 2.0, 4.0, True),
    (5, 3.0, 3.0, 3.0, 3.0, True),
    (5, 1.5, 6.0, math.inf, 2.0, False),
    (5, 4 / 3, 8.0, 4 / 3, 8.0, False),
    (4, 2.0, 6.0, 2.0, 6.0, True),
    (4, 2.0, 10 / 3, 2.0, 30.0, False),
]


@pytest.mark.parametrize("n, q, r, q_dual, r_dual, ok", INHOMOGENEOUS_CASES)
def test_inhomogeneous_conditions(n, q, r, q_dual, r_dual, ok):
    check = check_inhomogeneous_conditions(q, r, q_dual, r_dual, n)
    assert check.ok is ok
    assert bool(check.reasons) is not ok


def test_inhomogeneous_reasons_name_the_failures():
    gap = check_inhomogeneous_conditions(4.0, 4.0, 2.0, 4.0, 3)
    assert any("gap" in reason for reason in gap.reasons)
    side = check_inhomogeneous_conditions(1.5, 6.0, math.inf, 2.0, 5)
    assert side.reasons == ["(n-3)/r~ <= (n-1)/r fails"]
    uncovered = check_inhomogeneous_conditions(4 / 3, 8.0, 4 / 3, 8.0, 5)
    assert any("no side condition" in reason for reason in uncovered.reasons)


def test_inhomogeneous_midpoint():
    check = check_inhomogeneous_conditions(4.0, 4.0, 4.0, 4.0, 3)
    assert check.midpoint == pytest.approx((0.25, 0.25))
    assert check.midpoint_sharp


def test_dyadic_radii():
    grid = make_grid(3, 16, 8.0)
    assert dyadic_radii(grid) == [2.0, 1.0]


def test_fefferman_phong_estimate_is_homogeneous(grid3):
    V = PotentialField.inverse_square(grid3, coupling=1.0, epsilon=0.5)
    single = fp_norm_estimate(V, 1.25)
    assert single > 0
    assert fp_norm_estimate(2.0 * V, 1.25) == pytest.approx(2.0 * single, rel=1e-12)
    assert fp_norm_estimate(PotentialField.scalar(grid3, 0.0), 1.25) == 0.0


def test_fefferman_phong_rejects_bad_arguments(grid3):
    V = PotentialField.scalar(grid3, 1.0)
    with pytest.raises(PreconditionError):
        fp_norm_estimate(V, 2.0)
    with pytest.raises(PreconditionError):
        fp_norm_estimate(V, 1.25, radii=[grid3.L])


def test_exponent_tuple_validation():
    exponents = exponent_tuple(3, 4.0, 4.0)
    assert exponents.s == pytest.approx(0.5)
    assert exponents.sigma == pytest.approx(0.0)
    assert exponent_tuple(2, math.inf, 2.0).s == 0.0
    with pytest.raises(PreconditionError, match="outside"):
        exponent_tuple(3, 0.5, 4.0)
    with pytest.raises(PreconditionError, match="r_dual"):
        exponent_tuple(3, 4.0, 4.0, 4.0, math.nan)
    with pytest.raises(PreconditionError):
        exponent_tuple(1, 4.0, 4.0)


def test_inhomogeneous_check_takes_an_exponent_tuple():
    tuple_check = check_inhomogeneous(ExponentTuple(n=3, q=4.0, r=4.0, q_dual=2.0, r_dual=4.0))
    assert tuple_check == check_inhomogeneous_conditions(4.0, 4.0, 2.0, 4.0, 3)
    with pytest.raises(PreconditionError, match="dual pair"):
        check_inhomogeneous(ExponentTuple(n=3, q=4.0, r=4.0))
    with pytest.raises(PreconditionError, match="outside"):
        check_inhomogeneous_conditions(4.0, 4.0, 0.9, 4.0, 3)
