"""Forward, inhomogeneous and adjoint solves for the heat equation with absorption.

The problem on the torus is::

    du/dt = (theta/2) Lap u - f u,    u(., 0) = u0,    f = Phi(F).

Time stepping is Strang splitting: half a step of the pointwise decay
``exp(-f dt/2)``, an exact heat step ``exp(-theta lambda dt/2)`` per Fourier
mode, and another half step of decay. The one-step map ``P`` is symmetric
with respect to the grid inner product, positivity preserving and second
order accurate.

Sources enter through the trapezoid form of Duhamel's formula,
``v[m+1] = P v[m] + dt/2 (P w[m] + w[m+1])``. With this choice the
derivative of the discrete forward map in the latent field is exactly an
inhomogeneous solve (see :func:`heatbvm.semiparametric.apply_I`).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache

import numpy as np

from . import kernels
from .prior import LinkFunction
from .spectral import (
    GridMismatchError,
    SpaceTimeField,
    TimeGrid,
    TorusField,
    TorusGrid,
    apply_multiplier,
    laplacian_values,
)

# grids up to this many points use a dense one-step matrix
DENSE_LIMIT = 1024


class InvalidSpecError(ValueError):
    pass


@lru_cache(maxsize=16)
def heat_matrix(grid: TorusGrid, theta: float, dt: float) -> np.ndarray:
    """Dense symmetric matrix of the exact heat step of length ``dt``."""
    n = grid.size
    mult = np.exp(-0.5 * theta * grid.eigenvalues * dt)
    eye = np.eye(n).reshape((n,) + grid.shape)
    C = apply_multiplier(eye, grid, mult).reshape(n, n)
    C = 0.5 * (C + C.T)
    C.setflags(write=False)
    return C


class Propagator:
    """One Strang step for fixed ``(theta, f)`` and its repeated application."""

    def __init__(self, grid: TorusGrid, time: TimeGrid, theta: float, f: np.ndarray):
        self.grid = grid
        self.time = time
        self.theta = float(theta)
        self.r = np.exp(-0.5 * time.dt * np.asarray(f, dtype=float).ravel())
        self.heat_mult = np.exp(-0.5 * self.theta * grid.eigenvalues * time.dt)
        self.dense = grid.size <= DENSE_LIMIT
        if self.dense:
            C = heat_matrix(grid, self.theta, time.dt)
            self.P = self.r[:, None] * C * self.r[None, :]

    def _heat(self, X):
        lead = X.shape[:-1]
        Y = apply_multiplier(X.reshape(lead + self.grid.shape), self.grid, self.heat_mult)
        return Y.reshape(lead + (self.grid.size,))

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Apply ``P`` to the trailing axis of ``X`` (shape ``(..., n)``)."""
        if self.dense:
            return X @ self.P  # P is symmetric
        return self.r * self._heat(self.r * X)

    def recurse(self, x0: np.ndarray, B) -> np.ndarray:
        """``x[m+1] = P x[m] + B[m]``; ``B`` may be an int number of steps."""
        if self.dense:
            return kernels.affine_recursion(self.P, x0, B)
        steps = B if isinstance(B, (int, np.integer)) else B.shape[0]
        out = np.empty((steps + 1, self.grid.size))
        out[0] = x0
        for m in range(steps):
            out[m + 1] = self.apply(out[m])
            if not isinstance(B, (int, np.integer)):
                out[m + 1] += B[m]
        return out

    def duhamel(self, W: np.ndarray) -> np.ndarray:
        """Zero-initial-value solve with trapezoid source injection."""
        dt = self.time.dt
        B = 0.5 * dt * (self.apply(W[:-1]) + W[1:])
        return self.recurse(np.zeros(self.grid.size), B)

    def duhamel_backward(self, Z: np.ndarray) -> np.ndarray:
        """Zero-terminal-value solve: the time reversal of :meth:`duhamel`."""
        return self.duhamel(Z[::-1])[::-1]


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Everything that determines the forward map ``K_theta F``."""

    theta: float
    F: TorusField
    u0: TorusField
    time: TimeGrid
    link: LinkFunction = field(default_factory=LinkFunction)

    def __post_init__(self):
        if self.F.grid != self.u0.grid:
            raise GridMismatchError("F and u0 live on different grids")
        if not np.isfinite(self.theta) or self.theta <= 0:
            raise InvalidSpecError(f"theta must be finite and positive, got {self.theta}")
        if not np.all(np.isfinite(self.F.values)):
            raise InvalidSpecError("F contains non-finite values")
        if not np.all(np.isfinite(self.u0.values)):
            raise InvalidSpecError("u0 contains non-finite values")
        if np.min(self.u0.values) <= 0:
            raise InvalidSpecError("u0 must be strictly positive")

    @property
    def grid(self) -> TorusGrid:
        return self.F.grid

    @cached_property
    def f(self) -> np.ndarray:
        """Absorption ``Phi(F)`` on the grid (flat)."""
        return self.link(self.F.values).ravel()

    @cached_property
    def f_prime(self) -> np.ndarray:
        return self.link.prime(self.F.values).ravel()

    @cached_property
    def propagator(self) -> Propagator:
        return Propagator(self.grid, self.time, self.theta, self.f)

    @cached_property
    def solution(self) -> SpaceTimeField:
        """Cached result of :func:`solve_forward`."""
        u = self.propagator.recurse(self.u0.values.ravel(), self.time.steps)
        return SpaceTimeField(self.grid, self.time, u)

    def with_theta(self, theta: float) -> ProblemSpec:
        return replace(self, theta=float(theta))

    def with_F(self, F: TorusField) -> ProblemSpec:
        return replace(self, F=F)


def solve_forward(spec: ProblemSpec) -> SpaceTimeField:
    """Solution ``u = K_theta F`` on all time nodes (``u[0] = u0`` exactly)."""
    return spec.solution


def _check_source(spec: ProblemSpec, w: SpaceTimeField):
    if w.grid != spec.grid or w.time != spec.time:
        raise GridMismatchError("source lives on a different space-time grid")


def solve_inhom(spec: ProblemSpec, w: SpaceTimeField) -> SpaceTimeField:
    """Solve ``dv/dt = (theta/2) Lap v - f v + w`` with ``v(., 0) = 0``."""
    _check_source(spec, w)
    v = spec.propagator.duhamel(w.flat)
    return SpaceTimeField(spec.grid, spec.time, v)


def solve_adjoint(spec: ProblemSpec, w: SpaceTimeField) -> SpaceTimeField:
    """Solve ``-dp/dt = (theta/2) Lap p - f p + w`` with ``p(., T) = 0``.

    This is :func:`solve_inhom` run backwards in time. Under the trapezoid
    space-time inner product the exact transpose of :func:`solve_inhom`
    differs from it only on the end slices; see :func:`adjoint_endpoint_terms`.
    """
    _check_source(spec, w)
    p = spec.propagator.duhamel_backward(w.flat)
    return SpaceTimeField(spec.grid, spec.time, p)


def adjoint_endpoint_terms(spec: ProblemSpec, w: SpaceTimeField) -> SpaceTimeField:
    """Correction turning :func:`solve_adjoint` into the exact discrete transpose.

    ``<solve_inhom(a), b>_Q == <a, solve_adjoint(b) + adjoint_endpoint_terms(b)>_Q``
    holds to rounding error. The correction is ``-dt/2 w(0)`` on the first slice
    and ``+dt/2 w(T)`` on the last, and vanishes as ``dt -> 0``.
    """
    c = np.zeros_like(w.flat)
    half = 0.5 * spec.time.dt
    c[0] = -half * w.flat[0]
    c[-1] = half * w.flat[-1]
    return SpaceTimeField(spec.grid, spec.time, c)


def forward_residual(spec: ProblemSpec, u: SpaceTimeField | None = None) -> float:
    """Relative L2 size of ``du/dt - (theta/2) Lap u + f u`` on interior nodes.

    Time derivative by centred differences, Laplacian spectral.
    """
    u = spec.solution if u is None else u
    U = u.values
    dt = spec.time.dt
    dudt = (U[2:] - U[:-2]) / (2.0 * dt)
    mid = U[1:-1]
    f = spec.f.reshape(spec.grid.shape)
    res = dudt - 0.5 * spec.theta * laplacian_values(mid, spec.grid) + f * mid
    return float(np.sqrt(np.mean(res ** 2) / np.mean(mid ** 2)))


def solution_bounds(spec: ProblemSpec) -> dict:
    """Positivity and sup-norm diagnostics of the forward solution."""
    U = spec.solution.values
    return {
        "min": float(U.min()),
        "max": float(U.max()),
        "u0_sup": float(np.max(np.abs(spec.u0.values))),
    }
