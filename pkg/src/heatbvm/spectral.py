"""Periodic grids, fields and spectral operations on the unit torus [0, 1]^d.

Fields are stored by their grid values; Fourier data is computed on demand.
Two coefficient systems are used:

* ``TorusField.fourier`` -- complex coefficients ``h_m`` with
  ``h(x) = sum_m h_m exp(2 pi i m.x)``;
* ``TorusField.coeffs`` -- coordinates in the real orthonormal basis returned by
  :func:`spectral_basis` (constant, sqrt(2) cos, sqrt(2) sin), ordered by
  Laplacian eigenvalue and then lexicographically by mode vector.

All inner products are the discrete (midpoint/trapezoidal, which coincide on a
periodic grid) quadratures with cell volume ``1/Nx^d``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

SQRT2 = np.sqrt(2.0)


class GridMismatchError(ValueError):
    """Two fields live on different grids."""


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid with ``points_per_dim`` nodes per axis."""

    dim: int
    points_per_dim: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.points_per_dim < 8 or self.points_per_dim % 2:
            raise ValueError(f"points_per_dim must be even and >= 8, got {self.points_per_dim}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_dim,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_dim ** self.dim

    @property
    def cell_volume(self) -> float:
        return 1.0 / self.size

    @property
    def axes(self) -> tuple[int, ...]:
        """Trailing array axes that hold the spatial directions."""
        return tuple(range(-self.dim, 0))

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Node coordinates, one array of ``shape`` per direction."""
        x = np.arange(self.points_per_dim) / self.points_per_dim
        return np.meshgrid(*([x] * self.dim), indexing="ij")

    @property
    def eigenvalues(self) -> np.ndarray:
        """``4 pi^2 |m|^2`` in FFT layout (Nyquist index counted as +N/2)."""
        return _fft_eigenvalues(self)


@lru_cache(maxsize=None)
def _fft_wavenumbers(grid: TorusGrid) -> np.ndarray:
    n = grid.points_per_dim
    k = np.fft.fftfreq(n, d=1.0 / n).astype(int)
    k[n // 2] = n // 2
    ks = np.meshgrid(*([k] * grid.dim), indexing="ij")
    out = np.stack(ks, axis=-1)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _fft_eigenvalues(grid: TorusGrid) -> np.ndarray:
    m = _fft_wavenumbers(grid)
    lam = 4.0 * np.pi ** 2 * np.sum(m.astype(float) ** 2, axis=-1)
    lam.setflags(write=False)
    return lam


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid ``t_m = m T / Nt``, ``m = 0..Nt``."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.steps < 16:
            raise ValueError(f"steps must be >= 16, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.steps + 1)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights on the nodes."""
        w = np.full(self.steps + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w


class SpectralBasis:
    """Real orthonormal eigenbasis of the periodic Laplacian on a grid.

    Attributes
    ----------
    modes : (K, d) int array
        Representative mode vector of each basis function.
    kinds : (K,) int array
        0 for a self-conjugate mode (constant or Nyquist cosine, no sqrt(2)),
        1 for ``sqrt(2) cos(2 pi m.x)``, 2 for ``sqrt(2) sin(2 pi m.x)``.
    eigenvalues : (K,) float array
        ``4 pi^2 |m|^2``, nondecreasing.
    """

    def __init__(self, grid: TorusGrid):
        self.grid = grid
        n = grid.points_per_dim
        wn = _fft_wavenumbers(grid).reshape(-1, grid.dim)
        flat_of = {tuple(m): i for i, m in enumerate(wn)}

        def conj(m):
            return tuple(c if c == n // 2 else -c for c in m)

        entries = []
        seen = set()
        for m in map(tuple, wn):
            if m in seen:
                continue
            mc = conj(m)
            seen.update((m, mc))
            rep = max(m, mc)
            lam = 4.0 * np.pi ** 2 * sum(c * c for c in rep)
            if rep == conj(rep):
                entries.append((lam, rep, 0))
            else:
                entries.append((lam, rep, 1))
                entries.append((lam, rep, 2))
        entries.sort()
        self.eigenvalues = np.array([e[0] for e in entries])
        self.modes = np.array([e[1] for e in entries], dtype=int)
        self.kinds = np.array([e[2] for e in entries], dtype=int)
        self.flat_index = np.array([flat_of[e[1]] for e in entries], dtype=np.intp)
        self.conj_index = np.array([flat_of[conj(e[1])] for e in entries], dtype=np.intp)
        for a in (self.eigenvalues, self.modes, self.kinds, self.flat_index, self.conj_index):
            a.setflags(write=False)

    def __len__(self):
        return len(self.kinds)

    def analyse(self, values: np.ndarray) -> np.ndarray:
        """Real basis coefficients of grid values (leading axes are batched)."""
        g = self.grid
        lead = values.shape[: values.ndim - g.dim]
        fh = np.fft.fftn(values, axes=g.axes).reshape(lead + (g.size,)) / g.size
        sel = fh[..., self.flat_index]
        out = np.where(self.kinds == 0, sel.real, np.where(self.kinds == 1, SQRT2 * sel.real, -SQRT2 * sel.imag))
        return np.ascontiguousarray(out)

    def synthesise(self, coeffs: np.ndarray) -> np.ndarray:
        """Grid values from real basis coefficients (inverse of :meth:`analyse`).

        ``coeffs`` may be shorter than the basis along the last axis; missing
        trailing coefficients are zero.
        """
        g = self.grid
        coeffs = np.asarray(coeffs, dtype=float)
        J = coeffs.shape[-1]
        lead = coeffs.shape[:-1]
        fh = np.zeros(lead + (g.size,), dtype=complex)
        kinds = self.kinds[:J]
        idx = self.flat_index[:J]
        cidx = self.conj_index[:J]
        self_ = kinds == 0
        cos_ = kinds == 1
        sin_ = kinds == 2
        fh[..., idx[self_]] = coeffs[..., self_]
        fh[..., idx[cos_]] += coeffs[..., cos_] / SQRT2
        fh[..., cidx[cos_]] += coeffs[..., cos_] / SQRT2
        fh[..., idx[sin_]] += -1j * coeffs[..., sin_] / SQRT2
        fh[..., cidx[sin_]] += 1j * coeffs[..., sin_] / SQRT2
        fh = fh.reshape(lead + g.shape) * g.size
        return np.fft.ifftn(fh, axes=g.axes).real


    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Basis functions at arbitrary points ``(P, d)``; returns ``(P, K)``."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.grid.dim)
        phase = 2.0 * np.pi * pts @ self.modes.T
        out = np.where(self.kinds == 2, SQRT2 * np.sin(phase), np.cos(phase))
        out[:, self.kinds == 1] *= SQRT2
        return out

    def upsample(self, coeffs: np.ndarray, points: int) -> np.ndarray:
        """Values of the trigonometric field with these coefficients on a finer
        uniform grid with ``points`` points per dimension."""
        d = self.grid.dim
        if points < self.grid.points_per_dim:
            raise ValueError("upsampled grid must be at least as fine")
        coeffs = np.asarray(coeffs, dtype=float)
        J = len(coeffs)
        m = self.modes[:J]
        kinds = self.kinds[:J]
        spec = np.zeros((points,) * d, dtype=complex)
        plus = tuple((m % points).T)
        minus = tuple((-m % points).T)
        # e^{+i}, e^{-i} halves; a zero mode lands twice on index 0
        a = (np.where(kinds == 0, 0.5, 1.0 / SQRT2) * coeffs).astype(complex)
        a[kinds == 2] *= -1j
        np.add.at(spec, plus, a)
        np.add.at(spec, minus, np.conj(a))
        return np.fft.ifftn(spec).real * points ** d


@lru_cache(maxsize=None)
def spectral_basis(grid: TorusGrid) -> SpectralBasis:
    return SpectralBasis(grid)


class TorusField:
    """Real function on the torus represented by its grid values."""

    __array_priority__ = 1000

    def __init__(self, grid: TorusGrid, values):
        values = np.array(values, dtype=float)
        if values.size != grid.size:
            raise GridMismatchError(f"expected {grid.size} values, got {values.size}")
        self.grid = grid
        self.values = values.reshape(grid.shape)
        self.values.setflags(write=False)

    @classmethod
    def constant(cls, grid: TorusGrid, c: float) -> TorusField:
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_function(cls, grid: TorusGrid, func) -> TorusField:
        """Sample ``func(*coordinates)`` on the grid."""
        return cls(grid, np.broadcast_to(func(*grid.coordinates()), grid.shape))

    @classmethod
    def from_coeffs(cls, grid: TorusGrid, coeffs) -> TorusField:
        return cls(grid, spectral_basis(grid).synthesise(coeffs))

    @classmethod
    def basis_function(cls, grid: TorusGrid, k: int) -> TorusField:
        c = np.zeros(grid.size)
        c[k] = 1.0
        return cls.from_coeffs(grid, c)

    @cached_property
    def fourier(self) -> np.ndarray:
        """Complex Fourier coefficients in FFT layout (conjugate symmetric)."""
        return np.fft.fftn(self.values) / self.grid.size

    @cached_property
    def coeffs(self) -> np.ndarray:
        return spectral_basis(self.grid).analyse(self.values)

    def _check(self, other):
        if isinstance(other, TorusField) and other.grid != self.grid:
            raise GridMismatchError(f"{self.grid} != {other.grid}")

    def _val(self, other):
        if isinstance(other, TorusField):
            self._check(other)
            return other.values
        return other

    def __add__(self, other):
        return TorusField(self.grid, self.values + self._val(other))

    __radd__ = __add__

    def __sub__(self, other):
        return TorusField(self.grid, self.values - self._val(other))

    def __rsub__(self, other):
        return TorusField(self.grid, self._val(other) - self.values)

    def __mul__(self, other):
        return TorusField(self.grid, self.values * self._val(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return TorusField(self.grid, self.values / self._val(other))

    def __neg__(self):
        return TorusField(self.grid, -self.values)

    def map(self, func) -> TorusField:
        return TorusField(self.grid, func(self.values))

    def __repr__(self):
        return f"TorusField(grid={self.grid}, max={np.max(np.abs(self.values)):.4g})"


class SpaceTimeField:
    """Snapshots of a torus field on the nodes of a :class:`TimeGrid`.

    ``values`` has shape ``(Nt + 1,) + grid.shape``.
    """

    __array_priority__ = 1000

    def __init__(self, grid: TorusGrid, time: TimeGrid, values):
        values = np.array(values, dtype=float)
        expected = (time.steps + 1,) + grid.shape
        if values.size != np.prod(expected):
            raise GridMismatchError(f"expected shape {expected}, got {values.shape}")
        self.grid = grid
        self.time = time
        self.values = values.reshape(expected)
        self.values.setflags(write=False)

    @classmethod
    def zeros(cls, grid, time):
        return cls(grid, time, np.zeros((time.steps + 1,) + grid.shape))

    @classmethod
    def from_function(cls, grid, time, func):
        """Sample ``func(t, *x)`` with ``t`` broadcast along the first axis."""
        t = time.times.reshape((-1,) + (1,) * grid.dim)
        xs = [x[None] for x in grid.coordinates()]
        vals = np.broadcast_to(func(t, *xs), (time.steps + 1,) + grid.shape)
        return cls(grid, time, vals)

    def snapshot(self, m: int) -> TorusField:
        return TorusField(self.grid, self.values[m])

    @property
    def flat(self) -> np.ndarray:
        """View of the values with shape ``(Nt + 1, grid.size)``."""
        return self.values.reshape(self.time.steps + 1, self.grid.size)

    def _check(self, other):
        if isinstance(other, SpaceTimeField) and (other.grid != self.grid or other.time != self.time):
            raise GridMismatchError("space-time grids differ")

    def _val(self, other):
        if isinstance(other, SpaceTimeField):
            self._check(other)
            return other.values
        if isinstance(other, TorusField):
            if other.grid != self.grid:
                raise GridMismatchError(f"{self.grid} != {other.grid}")
            return other.values[None]
        return other

    def __add__(self, other):
        return SpaceTimeField(self.grid, self.time, self.values + self._val(other))

    __radd__ = __add__

    def __sub__(self, other):
        return SpaceTimeField(self.grid, self.time, self.values - self._val(other))

    def __mul__(self, other):
        return SpaceTimeField(self.grid, self.time, self.values * self._val(other))

    __rmul__ = __mul__

    def __neg__(self):
        return SpaceTimeField(self.grid, self.time, -self.values)

    def __repr__(self):
        return f"SpaceTimeField(grid={self.grid}, time={self.time})"


def apply_multiplier(values: np.ndarray, grid: TorusGrid, multiplier: np.ndarray) -> np.ndarray:
    """Multiply the Fourier transform of ``values`` (batched) by ``multiplier``."""
    fh = np.fft.fftn(values, axes=grid.axes)
    return np.fft.ifftn(fh * multiplier, axes=grid.axes).real


def laplacian(h: TorusField) -> TorusField:
    """Spectral Laplacian: Fourier coefficient ``m`` is scaled by ``-4 pi^2 |m|^2``."""
    return TorusField(h.grid, apply_multiplier(h.values, h.grid, -h.grid.eigenvalues))


def laplacian_values(values: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Batched Laplacian of raw arrays whose trailing axes are ``grid.shape``."""
    return apply_multiplier(values, grid, -grid.eigenvalues)


def inner_l2(a: TorusField, b: TorusField) -> float:
    if a.grid != b.grid:
        raise GridMismatchError(f"{a.grid} != {b.grid}")
    return float(np.sum(a.values * b.values) * a.grid.cell_volume)


def norm_l2(a: TorusField) -> float:
    return np.sqrt(inner_l2(a, a))


def sobolev_norm(h: TorusField, r: float) -> float:
    """Sequence-space norm ``(sum_k (1 + lambda_k)^r <h, e_k>^2)^(1/2)``.

    Negative ``r`` gives the dual norms, e.g. ``r = -2`` for ``(H^2)^*``.
    """
    if r < -2:
        raise ValueError(f"Sobolev order must be >= -2, got {r}")
    w = (1.0 + h.grid.eigenvalues) ** r
    return float(np.sqrt(np.sum(w * np.abs(h.fourier) ** 2)))


def spacetime_inner(a: SpaceTimeField, b: SpaceTimeField) -> float:
    """Time-trapezoid of spatial L2 inner products."""
    a._check(b)
    per_slice = np.sum((a.flat * b.flat), axis=1) * a.grid.cell_volume
    return float(per_slice @ a.time.weights)


def spacetime_norm(a: SpaceTimeField) -> float:
    return np.sqrt(spacetime_inner(a, a))


def spacetime_inner_values(a: np.ndarray, b: np.ndarray, grid: TorusGrid, time: TimeGrid) -> float:
    """:func:`spacetime_inner` on raw ``(Nt + 1, n)`` arrays."""
    return float(np.einsum("mi,mi,m->", a, b, time.weights) * grid.cell_volume)
