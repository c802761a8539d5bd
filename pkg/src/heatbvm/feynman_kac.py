"""Monte Carlo evaluation of the forward solution by the Feynman-Kac formula.

``u(x, t) = E[ u0(x + sqrt(theta) B_t) exp(-int_0^t f(x + sqrt(theta) B_s) ds) ]``

Brownian paths are simulated with exact Gaussian increments on ``steps``
sub-intervals and wrapped onto the torus. The absorption integral uses the
trapezoid rule, and ``f`` and ``u0`` are read off fine tables (spectral
upsampling followed by periodic linear interpolation), so the estimator never
touches the PDE solver.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .pde import ProblemSpec
from .spectral import TorusField, spectral_basis

CHUNK = 8192


def upsample(h: TorusField, points: int) -> np.ndarray:
    """Trigonometric interpolant of ``h`` sampled on a finer uniform grid."""
    return spectral_basis(h.grid).upsample(h.coeffs, points)


def _interp(table, pos):
    if table.ndim == 1:
        return kernels._pykernels._interp1(table, pos)
    return kernels._pykernels._interp2(table, pos[:, 0], pos[:, 1])


class FKEstimator:
    """Tables and path simulation for one problem setup."""

    def __init__(self, spec: ProblemSpec, table_points: int | None = None):
        g = spec.grid
        if table_points is None:
            table_points = max(16 * g.points_per_dim, 1024) if g.dim == 1 else max(4 * g.points_per_dim, 256)
        self.spec = spec
        self.dim = g.dim
        self.rate = spec.link(upsample(spec.F, table_points))
        self.u0 = upsample(spec.u0, table_points)

    def weights(self, x, t: float, n_paths: int, rng, steps: int = 512, antithetic: bool = True):
        """Per-path ``(absorption weight, u0 at path end)`` for one start point.

        With antithetic sampling the paths come in mirrored pairs, stored as
        the first and second half of each chunk.
        """
        if not t > 0:
            raise ValueError(f"t must be positive, got {t}")
        if antithetic and n_paths % 2:
            raise ValueError("n_paths must be even with antithetic sampling")
        start = np.atleast_1d(np.asarray(x, dtype=float))
        if start.size != self.dim:
            raise ValueError(f"start point must have {self.dim} coordinates")
        dt = t / steps
        scale = np.sqrt(self.spec.theta * dt)
        w_all, v_all = [], []
        left = n_paths
        while left > 0:
            m = min(CHUNK, left)
            k = m // 2 if antithetic else m
            shape = (steps, k) if self.dim == 1 else (steps, k, 2)
            incr = rng.standard_normal(shape)
            for sign in ((1.0, -1.0) if antithetic else (1.0,)):
                integral, final = kernels.fk_paths(self.rate, start, incr, scale, dt, sign)
                w_all.append(np.exp(-integral))
                v_all.append(_interp(self.u0, final))
            left -= m
        return np.concatenate(w_all), np.concatenate(v_all)

    def estimate(self, x, t: float, n_paths: int, rng, steps: int = 512, antithetic: bool = True):
        w, v = self.weights(x, t, n_paths, rng, steps, antithetic)
        y = w * v
        if antithetic:
            y = _pair_means(y, n_paths)
        return float(y.mean()), float(y.std(ddof=1) / np.sqrt(len(y)))


def _pair_means(y, n_paths):
    out = []
    pos = 0
    left = n_paths
    while left > 0:
        m = min(CHUNK, left)
        k = m // 2
        out.append(0.5 * (y[pos:pos + k] + y[pos + k:pos + m]))
        pos += m
        left -= m
    return np.concatenate(out)


def fk_estimate(spec: ProblemSpec, x, t: float, n_paths: int, rng, steps: int = 512,
                antithetic: bool = True) -> tuple[float, float]:
    """Feynman-Kac estimate of ``u(x, t)`` and its standard error."""
    if n_paths < 2:
        raise ValueError("need at least two paths")
    return FKEstimator(spec).estimate(x, t, n_paths, rng, steps, antithetic)


def solver_value(spec: ProblemSpec, x, t: float) -> float:
    """Solver output at ``(x, t)``: trigonometric interpolation in space of the
    slice at time node ``t``."""
    m = int(round(t / spec.time.dt))
    if abs(m * spec.time.dt - t) > 1e-9 * max(1.0, t):
        raise ValueError("t must lie on the time grid")
    c = spec.solution.snapshot(m).coeffs
    return float((spectral_basis(spec.grid).evaluate(np.atleast_1d(x)) @ c)[0])
