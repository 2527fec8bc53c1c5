"""
Periodic torus discretization, fields in physical and spectral form, and the
norms everything else consumes.

Conventions (fixed once, used by every module):

* forward transform approximates ``F f(xi) = int f(x) exp(-i x.xi) dx`` by the
  Riemann sum ``dx^d * fftn(f)``;
* inverse transform carries ``dxi^d / (2 pi)^d``, i.e. ``ifftn(c) / dx^d``;
* space integrals are Riemann sums (exact for band-limited samples), time
  integrals are trapezoidal.

With this pairing Parseval is exact on the grid:
``dx^d sum |f|^2 == (2 pi)^-d dxi^d sum |fhat|^2``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "TorusGrid",
    "RealField",
    "ComplexField",
    "SpectralField",
    "StatePair",
    "forward_transform",
    "inverse_transform",
    "inverse_transform_complex",
    "lp_norm",
    "sobolev_norm",
    "mixed_norm",
    "write_field",
    "read_field",
    "InvalidWindowError",
]

MIN_EXTENT = 8.0 * np.pi  # dxi <= 1/4 so unit frequency cells stay resolved


class InvalidWindowError(ValueError):
    """Raised when a time window is empty or outside the stored range."""


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid on ``[0, L)^d`` with ``n`` points per axis.

    ``dx = L / n`` in physical space, ``dxi = 2 pi / L`` in frequency space.
    ``L >= 8 pi`` is enforced so that ``dxi <= 1/4`` and every unit frequency
    cube contains at least eight grid frequencies per axis.
    """

    d: int
    n: int
    L: float

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if not _is_power_of_two(self.n):
            raise ValueError(f"points per axis must be a power of two, got {self.n}")
        if not self.L > 0:
            raise ValueError("extent L must be positive")
        if self.dxi > 0.25 + 1e-12:
            raise ValueError(
                f"frequency spacing dxi = {self.dxi:.4f} > 1/4; need L >= 8 pi"
            )

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def dxi(self) -> float:
        return 2.0 * np.pi / self.L

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def npoints(self) -> int:
        return self.n**self.d

    @property
    def volume(self) -> float:
        return self.L**self.d

    @property
    def nyquist(self) -> float:
        return np.pi * self.n / self.L

    def axis_points(self) -> np.ndarray:
        """Physical sample coordinates along one axis."""
        return np.arange(self.n) * self.dx

    def axis_frequencies(self) -> np.ndarray:
        """Grid frequencies along one axis in FFT layout."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.dx)

    def frequency_mesh(self) -> tuple[np.ndarray, ...]:
        """Broadcastable per-axis frequency arrays (sparse meshgrid)."""
        return _frequency_mesh(self)

    def bracket(self) -> np.ndarray:
        """``<xi> = (1 + |xi|^2)^(1/2)`` on the full frequency grid."""
        return _bracket(self)

    def point_mesh(self) -> tuple[np.ndarray, ...]:
        """Broadcastable per-axis physical coordinate arrays."""
        return _point_mesh(self)

    def require_mode(self, k) -> None:
        """Check a decomposition index against the Nyquist margin."""
        k = np.atleast_1d(np.asarray(k))
        if float(np.max(np.abs(k))) + 1.0 >= self.nyquist:
            raise ValueError(
                f"cell index {tuple(int(v) for v in k)} too close to Nyquist "
                f"{self.nyquist:.3f} for n={self.n}, L={self.L}"
            )

    def wrap_displacement(self, delta: np.ndarray) -> np.ndarray:
        """Minimum-image displacement, mapped into ``[-L/2, L/2)``."""
        return np.mod(np.asarray(delta) + 0.5 * self.L, self.L) - 0.5 * self.L


@lru_cache(maxsize=64)
def _frequency_mesh(grid: TorusGrid) -> tuple[np.ndarray, ...]:
    axes = [grid.axis_frequencies() for _ in range(grid.d)]
    return tuple(np.meshgrid(*axes, indexing="ij", sparse=True))


@lru_cache(maxsize=64)
def _bracket(grid: TorusGrid) -> np.ndarray:
    mesh = _frequency_mesh(grid)
    xi2 = np.zeros(grid.shape)
    for ax in mesh:
        xi2 = xi2 + ax**2
    out = np.sqrt(1.0 + xi2)
    out.flags.writeable = False
    return out


@lru_cache(maxsize=64)
def _point_mesh(grid: TorusGrid) -> tuple[np.ndarray, ...]:
    axes = [grid.axis_points() for _ in range(grid.d)]
    return tuple(np.meshgrid(*axes, indexing="ij", sparse=True))


def _check_shape(grid: TorusGrid, values: np.ndarray) -> None:
    if values.shape != grid.shape:
        raise ValueError(f"values shape {values.shape} != grid shape {grid.shape}")


@dataclass(frozen=True)
class RealField:
    """Real samples of a function on the torus."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        _check_shape(self.grid, values)
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite samples")
        object.__setattr__(self, "values", values)

    @staticmethod
    def zeros(grid: TorusGrid) -> "RealField":
        return RealField(grid, np.zeros(grid.shape))

    @staticmethod
    def from_function(grid: TorusGrid, fn) -> "RealField":
        mesh = grid.point_mesh()
        return RealField(grid, np.broadcast_to(fn(*mesh), grid.shape).copy())


@dataclass(frozen=True)
class ComplexField:
    """Complex samples; produced by one-sided frequency-cell projections."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.complex128)
        _check_shape(self.grid, values)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients in FFT layout under the documented convention."""

    grid: TorusGrid
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        _check_shape(self.grid, coeffs)
        object.__setattr__(self, "coeffs", coeffs)

    def hermitian_defect(self) -> float:
        """Relative deviation from ``c(-xi) == conj(c(xi))``."""
        c = self.coeffs
        mirrored = c
        for ax in range(self.grid.d):
            mirrored = np.flip(np.roll(mirrored, -1, axis=ax), axis=ax)
        denom = float(np.max(np.abs(c)))
        if denom == 0.0:
            return 0.0
        return float(np.max(np.abs(mirrored.conj() - c))) / denom


@dataclass(frozen=True)
class StatePair:
    """Cauchy data / evolving state ``(u, u_t)`` on a common grid."""

    u: RealField
    ut: RealField

    def __post_init__(self) -> None:
        if self.u.grid != self.ut.grid:
            raise ValueError("state components live on different grids")

    @property
    def grid(self) -> TorusGrid:
        return self.u.grid

    @staticmethod
    def zeros(grid: TorusGrid) -> "StatePair":
        return StatePair(RealField.zeros(grid), RealField.zeros(grid))


def forward_transform(f: RealField | ComplexField) -> SpectralField:
    """Discrete realization of ``f -> fhat`` with the ``dx^d`` Riemann weight."""
    grid = f.grid
    return SpectralField(grid, np.fft.fftn(f.values) * grid.dx**grid.d)


def inverse_transform(F: SpectralField, imag_tol: float = 1e-9) -> RealField:
    """Inverse transform of a Hermitian spectrum back to a real field."""
    grid = F.grid
    values = np.fft.ifftn(F.coeffs) / grid.dx**grid.d
    scale = float(np.max(np.abs(values)))
    if scale > 0 and float(np.max(np.abs(values.imag))) > imag_tol * scale:
        raise ValueError("spectrum is not Hermitian-symmetric; use the complex inverse")
    return RealField(grid, values.real)


def inverse_transform_complex(F: SpectralField) -> ComplexField:
    grid = F.grid
    return ComplexField(grid, np.fft.ifftn(F.coeffs) / grid.dx**grid.d)


def _values_of(f) -> np.ndarray:
    if isinstance(f, (RealField, ComplexField)):
        return f.values
    return np.asarray(f)


def lp_norm(f, r: float, grid: TorusGrid | None = None) -> float:
    """``L^r`` norm via Riemann sum; ``r = inf`` takes the grid maximum."""
    values = _values_of(f)
    if grid is None:
        grid = f.grid
    if np.isinf(r):
        return float(np.max(np.abs(values)))
    if r < 1:
        raise ValueError("Lebesgue exponent must be >= 1")
    return float((np.sum(np.abs(values) ** r) * grid.dx**grid.d) ** (1.0 / r))


def sobolev_norm(f: RealField | ComplexField | SpectralField, s: float) -> float:
    """``H^s`` norm from the spectral side.

    Returns ``(sum <xi>^(2s) |fhat|^2 dxi^d (2 pi)^-d)^(1/2)``, which reduces
    to the quadrature ``L^2`` norm at ``s = 0`` by Parseval.
    """
    if not np.isfinite(s):
        raise ValueError("regularity exponent must be finite")
    if isinstance(f, SpectralField):
        spec = f
    else:
        spec = forward_transform(f)
    grid = spec.grid
    weight = grid.bracket() ** (2.0 * s)
    total = np.sum(weight * np.abs(spec.coeffs) ** 2)
    return float(np.sqrt(total * (grid.dxi / (2.0 * np.pi)) ** grid.d))


def mixed_norm(times, fields, q: float, r: float, window=None) -> float:
    """Discrete ``L^q_t L^r_x`` norm of a stored trajectory.

    Trapezoid rule in time over ``window`` (defaults to the full stored
    range), Riemann sum in space; ``q = inf`` or ``r = inf`` take maxima.
    ``fields`` is a sequence aligned with ``times`` whose entries are
    ``RealField``/``ComplexField`` or plain arrays (then ``grid`` is taken
    from the first field).
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) != len(fields):
        raise ValueError("times and fields must align")
    if q < 1 or r < 1:
        raise ValueError("mixed-norm exponents must be >= 1")
    if window is None:
        window = (float(times[0]), float(times[-1]))
    t0, t1 = float(window[0]), float(window[1])
    mask = (times >= t0 - 1e-12) & (times <= t1 + 1e-12)
    idx = np.nonzero(mask)[0]
    if idx.size == 0 or t1 < t0:
        raise InvalidWindowError(f"window {window} selects no snapshots")
    first = fields[idx[0]]
    grid = first.grid if isinstance(first, (RealField, ComplexField)) else None
    space = np.array(
        [lp_norm(fields[i], r, grid=grid if grid is not None else fields[i].grid)
         for i in idx]
    )
    if np.isinf(q):
        return float(np.max(space))
    if idx.size == 1:
        return float(space[0])
    return float(np.trapezoid(space**q, times[idx]) ** (1.0 / q))


# Flat binary container: little-endian header (d: u4, n: u4, L: f8) followed by
# the row-major float64 samples.

_HEADER = struct.Struct("<IId")


def write_field(path, f: RealField) -> None:
    grid = f.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(grid.d, grid.n, grid.L))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_field(path) -> RealField:
    with open(path, "rb") as fh:
        d, n, L = _HEADER.unpack(fh.read(_HEADER.size))
        grid = TorusGrid(d, n, L)
        data = np.frombuffer(fh.read(8 * grid.npoints), dtype="<f8")
    return RealField(grid, data.reshape(grid.shape).astype(np.float64))
