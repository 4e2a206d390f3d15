import math

import numpy as np
import pytest

from src.lame_spectral.errors import PreconditionError
from src.lame_spectral.grid import (
    SNAPSHOT_MAGIC,
    VectorField,
    make_grid,
    read_snapshot,
    write_snapshot,
)
from src.lame_spectral.models import Space
from src.lame_spectral.sampling import plane_mode, random_field


@pytest.mark.parametrize(
    "n, N, L",
    [(4, 16, 1.0), (1, 16, 1.0), (2, 12, 1.0), (2, 4, 1.0), (3, 16, 0.0), (2, 16, -1.0)],
)
def test_invalid_grid_rejected(n, N, L):
    with pytest.raises(PreconditionError):
        make_grid(n, N, L)


def test_grid_geometry(grid2):
    assert grid2.shape == (32, 32)
    assert grid2.sites == 1024
    assert grid2.spacing == pytest.approx(2 * math.pi / 32)
    assert grid2.frequency_step == pytest.approx(1.0)
    assert grid2.nyquist == pytest.approx(16.0)
    assert grid2.volume == pytest.approx((2 * math.pi) ** 2)


def test_frequency_indexing(grid2):
    np.testing.assert_allclose(grid2.frequency_at((-16, 3)), [-16.0, 3.0])
    assert grid2.storage_index((-1, 2)) == (31, 2)
    xi = grid2.wavenumbers()
    np.testing.assert_allclose(xi[:, 31, 2], [-1.0, 2.0])
    with pytest.raises(PreconditionError):
        grid2.frequency_at((16, 0))


def test_minimum_image_distance(grid2):
    distance = grid2.distance(grid2.centre)
    assert distance[0, 0] == pytest.approx(math.sqrt(2) * math.pi)
    assert distance[16, 16] == pytest.approx(0.0)
    assert np.max(distance) <= math.sqrt(2) * math.pi + 1e-12


def test_plane_mode_transforms_to_a_single_coefficient(grid2):
    k = (3, -2)
    spectrum = plane_mode(grid2, k).to_frequency()
    expected = np.zeros((2, *grid2.shape), dtype=np.complex128)
    expected[(0, *grid2.storage_index(k))] = grid2.sites
    np.testing.assert_allclose(spectrum.values, expected, atol=1e-9)


def test_transform_pair_inverts(grid, rng):
    field = random_field(grid, rng)
    back = field.to_frequency().to_physical()
    assert back.space is Space.PHYSICAL
    np.testing.assert_allclose(back.values, field.values, atol=1e-12)


def test_parseval(grid, rng):
    f = random_field(grid, rng)
    physical = np.sum(np.abs(f.values) ** 2)
    spectral = np.sum(np.abs(f.to_frequency().values) ** 2) / grid.sites
    assert spectral == pytest.approx(physical, rel=1e-10)


def test_field_values_are_read_only(grid2):
    field = VectorField.zeros(grid2)
    with pytest.raises(ValueError):
        field.values[0, 0, 0] = 1.0


def test_field_shape_checked(grid2):
    with pytest.raises(PreconditionError):
        VectorField(grid2, Space.PHYSICAL, np.zeros((3, 32, 32)))


def test_arithmetic_requires_matching_space_and_grid(grid2, grid3, rng):
    physical = random_field(grid2, rng)
    frequency = physical.to_frequency()
    with pytest.raises(PreconditionError):
        physical + frequency
    with pytest.raises(PreconditionError):
        physical - random_field(grid3, rng)
    doubled = 2.0 * physical - physical
    np.testing.assert_allclose(doubled.values, physical.values)


def test_frequency_operations_require_frequency_space(grid2):
    with pytest.raises(PreconditionError):
        VectorField.zeros(grid2).require(Space.FREQUENCY)


def test_snapshot_round_trip_is_bit_exact(tmp_path, grid, rng):
    field = random_field(grid, rng).to_frequency()
    path = write_snapshot(field, tmp_path / "field.lfd")
    restored = read_snapshot(path)
    assert restored.grid == field.grid
    assert restored.space is Space.FREQUENCY
    assert np.array_equal(restored.values, field.values)
    header = 8 + 4 * 3 + 8
    assert path.stat().st_size == header + grid.sites * grid.n * 16
    assert path.read_bytes()[:8] == SNAPSHOT_MAGIC


def test_snapshot_bad_magic(tmp_path, grid2):
    path = write_snapshot(VectorField.zeros(grid2), tmp_path / "field.lfd")
    raw = bytearray(path.read_bytes())
    raw[:8] = b"NOTAFLD!"
    path.write_bytes(bytes(raw))
    with pytest.raises(PreconditionError, match="magic"):
        read_snapshot(path)


def test_snapshot_truncated(tmp_path, grid2):
    path = write_snapshot(VectorField.zeros(grid2), tmp_path / "field.lfd")
    path.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(PreconditionError, match="payload"):
        read_snapshot(path)
    path.write_bytes(b"LAME")
    with pytest.raises(PreconditionError, match="header"):
        read_snapshot(path)


def test_snapshot_header_layout(tmp_path, grid3):
    path = write_snapshot(VectorField.zeros(grid3).to_frequency(), tmp_path / "field.lfd")
    raw = path.read_bytes()
    n, N, flag = np.frombuffer(raw, dtype="<u4", count=3, offset=8)
    (L,) = np.frombuffer(raw, dtype="<f8", count=1, offset=20)
    assert (n, N, flag) == (3, 16, Space.FREQUENCY.flag)
    assert L == grid3.L
    assert raw[28:] == bytes(grid3.sites * 3 * 16)
