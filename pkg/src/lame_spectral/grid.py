"""
Periodic lattice, discrete Fourier transform conventions and vector fields.

The forward transform has kernel e^{-i x.xi} and no normalization; the inverse
carries the 1/N^n factor. With x_m = (L/N) m and xi_k = (2 pi/L) k this is
exactly numpy/scipy's fftn/ifftn pair applied over the spatial axes, so frequency
arrays are stored in FFT wrap order and exposed in signed form through
Grid.frequency_at.

Snapshot format (little-endian): b"LAMEFLD1", u32 n, u32 N, u32 space flag,
f64 L, then n*N^n complex samples as interleaved (re, im) f64, sites in row-major
order and components contiguous within each site.
"""

from collections.abc import Sequence
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Self

import numpy as np
import scipy.fft
import structlog
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .config import config
from .errors import PreconditionError
from .models import Space

logger = structlog.get_logger(__name__)

SNAPSHOT_MAGIC = b"LAMEFLD1"
_HEADER = np.dtype(
    [("magic", "S8"), ("n", "<u4"), ("N", "<u4"), ("space", "<u4"), ("L", "<f8")]
)

ComplexArray = NDArray[np.complex128]
RealArray = NDArray[np.float64]


class Grid(BaseModel):
    """Periodic lattice with N points per axis on a box of side L."""

    model_config = ConfigDict(frozen=True)

    n: int = Field(..., description="Spatial dimension (2 or 3)")
    N: int = Field(..., description="Points per axis (power of two, at least 8)")
    L: float = Field(..., description="Box side length")

    @field_validator("n")
    @classmethod
    def _check_dimension(cls, value: int) -> int:
        if value not in (2, 3):
            raise ValueError(f"Unsupported dimension: {value}")
        return value

    @field_validator("N")
    @classmethod
    def _check_points(cls, value: int) -> int:
        if value < 8 or value & (value - 1):
            raise ValueError(f"N must be a power of two >= 8, got {value}")
        return value

    @field_validator("L")
    @classmethod
    def _check_length(cls, value: float) -> float:
        if not (np.isfinite(value) and value > 0):
            raise ValueError(f"Box length must be positive, got {value}")
        return value

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.n

    @property
    def sites(self) -> int:
        return self.N**self.n

    @property
    def spacing(self) -> float:
        return self.L / self.N

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.n

    @property
    def volume(self) -> float:
        return self.L**self.n

    @property
    def frequency_step(self) -> float:
        return 2 * np.pi / self.L

    @property
    def nyquist(self) -> float:
        """Largest representable frequency along one axis."""
        return np.pi * self.N / self.L

    def frequency_at(self, k: Sequence[int]) -> RealArray:
        """Return xi_k = (2 pi/L) k for a signed multi-index k in [-N/2, N/2)^n."""
        index = np.asarray(k, dtype=np.int64)
        if index.shape != (self.n,):
            raise PreconditionError(f"Multi-index must have {self.n} entries")
        if np.any(index < -self.N // 2) or np.any(index >= self.N // 2):
            raise PreconditionError(f"Multi-index {tuple(k)} outside [-N/2, N/2)")
        return self.frequency_step * index.astype(np.float64)

    def storage_index(self, k: Sequence[int]) -> tuple[int, ...]:
        """Wrap-order array index of the signed multi-index k."""
        self.frequency_at(k)
        return tuple(int(component) % self.N for component in k)

    def wavenumbers(self) -> RealArray:
        """Frequencies of every site, shape (n, N, ..., N), in FFT wrap order."""
        return _wavenumbers(self.n, self.N, self.L)

    def wavenumber_norm(self) -> RealArray:
        return _wavenumber_norm(self.n, self.N, self.L)

    def coordinates(self) -> RealArray:
        """Site positions x_m = (L/N) m in [0, L), shape (n, N, ..., N)."""
        axis = self.spacing * np.arange(self.N, dtype=np.float64)
        return np.stack(np.meshgrid(*([axis] * self.n), indexing="ij"))

    def displacement(self, centre: Sequence[float]) -> RealArray:
        """Minimum-image displacement x - centre on the torus."""
        offset = self.coordinates() - np.asarray(centre, dtype=np.float64).reshape(
            (self.n,) + (1,) * self.n
        )
        return offset - self.L * np.round(offset / self.L)

    def distance(self, centre: Sequence[float]) -> RealArray:
        return np.sqrt(np.sum(self.displacement(centre) ** 2, axis=0))

    @property
    def centre(self) -> tuple[float, ...]:
        return (self.L / 2,) * self.n


@lru_cache(maxsize=16)
def _wavenumbers(n: int, N: int, L: float) -> RealArray:
    axis = 2 * np.pi * scipy.fft.fftfreq(N, d=L / N)
    xi = np.stack(np.meshgrid(*([axis] * n), indexing="ij"))
    xi.flags.writeable = False
    return xi


@lru_cache(maxsize=16)
def _wavenumber_norm(n: int, N: int, L: float) -> RealArray:
    xi = _wavenumbers(n, N, L)
    norm = np.sqrt(np.sum(xi * xi, axis=0))
    norm.flags.writeable = False
    return norm


def make_grid(n: int, N: int, L: float) -> Grid:
    """Build a grid, raising PreconditionError on invalid parameters."""
    try:
        return Grid(n=n, N=N, L=L)
    except ValueError as e:
        raise PreconditionError(f"Invalid grid ({n}, {N}, {L}): {e}") from e


@dataclass(frozen=True, eq=False)
class VectorField:
    """n-component complex field on a grid, in physical or frequency space."""

    grid: Grid
    space: Space
    values: ComplexArray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.complex128, copy=True)
        expected = (self.grid.n, *self.grid.shape)
        if values.shape != expected:
            raise PreconditionError(f"Field shape {values.shape} != {expected}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid, space: Space = Space.PHYSICAL) -> Self:
        return cls(grid, space, np.zeros((grid.n, *grid.shape), dtype=np.complex128))

    def with_values(self, values: ComplexArray, space: Space | None = None) -> "VectorField":
        return VectorField(self.grid, space or self.space, values)

    def require(self, space: Space) -> None:
        if self.space is not space:
            raise PreconditionError(f"Expected a {space.value}-space field, got {self.space.value}")

    def check_compatible(self, other: "VectorField") -> None:
        if self.grid != other.grid:
            raise PreconditionError("Fields live on different grids")
        if self.space is not other.space:
            raise PreconditionError("Fields live in different spaces")

    def __add__(self, other: "VectorField") -> "VectorField":
        self.check_compatible(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "VectorField") -> "VectorField":
        self.check_compatible(other)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar: complex) -> "VectorField":
        return self.with_values(scalar * self.values)

    __rmul__ = __mul__

    def to_frequency(self) -> "VectorField":
        return self if self.space is Space.FREQUENCY else dft_forward(self)

    def to_physical(self) -> "VectorField":
        return self if self.space is Space.PHYSICAL else dft_inverse(self)


def _spatial_axes(n: int, leading: int = 1) -> tuple[int, ...]:
    return tuple(range(leading, leading + n))


def forward_values(values: ComplexArray, n: int, leading: int = 1) -> ComplexArray:
    """Unnormalized forward DFT over the trailing n axes."""
    return scipy.fft.fftn(
        values, axes=_spatial_axes(n, leading), workers=config.fft_workers
    )


def inverse_values(values: ComplexArray, n: int, leading: int = 1) -> ComplexArray:
    """Inverse DFT (1/N^n normalized) over the trailing n axes."""
    return scipy.fft.ifftn(
        values, axes=_spatial_axes(n, leading), workers=config.fft_workers
    )


def dft_forward(f: VectorField) -> VectorField:
    """Component-wise DFT with kernel e^{-i x.xi}, unnormalized."""
    f.require(Space.PHYSICAL)
    return VectorField(f.grid, Space.FREQUENCY, forward_values(f.values, f.grid.n))


def dft_inverse(F: VectorField) -> VectorField:
    """Inverse of dft_forward, carrying the 1/N^n factor."""
    F.require(Space.FREQUENCY)
    return VectorField(F.grid, Space.PHYSICAL, inverse_values(F.values, F.grid.n))


def write_snapshot(field: VectorField, path: Path | str) -> Path:
    """Write a field in the binary snapshot format."""
    path = Path(path)
    grid = field.grid
    header = np.array(
        [(SNAPSHOT_MAGIC, grid.n, grid.N, field.space.flag, grid.L)], dtype=_HEADER
    )
    # sites row-major, components contiguous within a site
    payload = np.ascontiguousarray(np.moveaxis(field.values, 0, -1)).astype("<c16")
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        handle.write(header.tobytes())
        handle.write(payload.tobytes())
    logger.debug("Wrote snapshot", path=str(path), n=grid.n, N=grid.N, space=field.space.value)
    return path


def read_snapshot(path: Path | str) -> VectorField:
    """Read a field written by write_snapshot."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.itemsize:
        raise PreconditionError(f"Snapshot {path} is shorter than its header")
    header = np.frombuffer(raw, dtype=_HEADER, count=1)[0]
    magic, n, N, flag, L = (
        bytes(header["magic"]),
        int(header["n"]),
        int(header["N"]),
        int(header["space"]),
        float(header["L"]),
    )
    if magic != SNAPSHOT_MAGIC:
        raise PreconditionError(f"Snapshot {path} has bad magic {magic!r}")
    try:
        grid = Grid(n=n, N=N, L=L)
        space = Space.from_flag(flag)
    except ValueError as e:
        raise PreconditionError(f"Snapshot {path} has an invalid header: {e}") from e
    expected = grid.sites * n * 16
    body = raw[_HEADER.itemsize :]
    if len(body) != expected:
        raise PreconditionError(
            f"Snapshot {path} payload has {len(body)} bytes, expected {expected}"
        )
    sites = np.frombuffer(body, dtype="<c16").reshape((*grid.shape, n))
    return VectorField(grid, space, np.moveaxis(sites, -1, 0))
