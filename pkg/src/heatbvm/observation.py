"""White-noise observations of the forward solution and the log-likelihood.

Data are coefficients of the solution in a truncated orthonormal basis of
space-time functions: the real Laplacian eigenbasis in space times the
cosine basis ``cos(pi q t / T)`` in time, normalised for the trapezoid
quadrature (a DCT-I). With no truncation the basis is complete on the grid,
so coefficient-space inner products equal :func:`spacetime_inner` exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.fft import dct

from .pde import ProblemSpec
from .rng import make_rng
from .spectral import SpaceTimeField, TimeGrid, TorusGrid, spacetime_inner_values, spectral_basis


class BasisMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class SpaceTimeBasis:
    grid: TorusGrid
    time: TimeGrid
    j_space: int | None = None
    j_time: int | None = None

    def __post_init__(self):
        if self.j_space is not None and not 1 <= self.j_space <= self.grid.size:
            raise ValueError(f"j_space must be in [1, {self.grid.size}], got {self.j_space}")
        if self.j_time is not None and not 1 <= self.j_time <= self.time.steps + 1:
            raise ValueError(f"j_time must be in [1, {self.time.steps + 1}], got {self.j_time}")

    @property
    def n_space(self) -> int:
        return self.grid.size if self.j_space is None else self.j_space

    @property
    def n_time(self) -> int:
        return self.time.steps + 1 if self.j_time is None else self.j_time

    @property
    def size(self) -> int:
        return self.n_space * self.n_time

    @property
    def complete(self) -> bool:
        return self.n_space == self.grid.size and self.n_time == self.time.steps + 1

    @cached_property
    def _time_norms(self) -> np.ndarray:
        N = self.time.steps
        t = np.full(N + 1, 0.5 * self.time.dt * N)
        t[0] = t[-1] = self.time.dt * N
        return np.sqrt(t)

    def analyse(self, values: np.ndarray) -> np.ndarray:
        """Coefficients (flat, time-mode major) of an ``(Nt+1, n)`` array."""
        sb = spectral_basis(self.grid)
        a = sb.analyse(values.reshape((self.time.steps + 1,) + self.grid.shape))[:, : self.n_space]
        y = dct(a, type=1, axis=0)
        c = 0.5 * self.time.dt * y / self._time_norms[:, None]
        return np.ascontiguousarray(c[: self.n_time]).ravel()

    def synthesise(self, coeffs: np.ndarray) -> np.ndarray:
        """Grid values ``(Nt+1, n)`` of a coefficient vector of this basis."""
        c = np.zeros((self.time.steps + 1, self.n_space))
        c[: self.n_time] = np.asarray(coeffs).reshape(self.n_time, self.n_space)
        e = c / self._time_norms[:, None]
        e[0] *= 2.0
        e[-1] *= 2.0
        a = 0.5 * dct(e, type=1, axis=0)
        vals = spectral_basis(self.grid).synthesise(a)
        return vals.reshape(self.time.steps + 1, self.grid.size)

    def mode_labels(self) -> tuple[np.ndarray, np.ndarray]:
        """``(time_mode, space_mode)`` index of every coefficient."""
        q, k = np.meshgrid(np.arange(self.n_time), np.arange(self.n_space), indexing="ij")
        return q.ravel(), k.ravel()

    def tail_mass(self, values: np.ndarray) -> float:
        """Squared norm of the part of a field not captured by the truncation."""
        c = self.analyse(values)
        return spacetime_inner_values(values, values, self.grid, self.time) - float(c @ c)

    def to_dict(self) -> dict:
        return {
            "dim": self.grid.dim,
            "nx": self.grid.points_per_dim,
            "horizon": self.time.horizon,
            "nt": self.time.steps,
            "j_space": self.n_space,
            "j_time": self.n_time,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SpaceTimeBasis:
        grid = TorusGrid(int(d["dim"]), int(d["nx"]))
        time = TimeGrid(float(d["horizon"]), int(d["nt"]))
        return cls(grid, time, int(d["j_space"]), int(d["j_time"]))


@dataclass(eq=False)
class Observation:
    """``coeffs = signal + noise / sqrt(noise_level)``; the noise draw is kept."""

    coeffs: np.ndarray
    noise_level: float
    noise: np.ndarray
    signal: np.ndarray
    basis: SpaceTimeBasis
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def at_noise_level(self, n: float) -> Observation:
        """Same signal and noise draw, different noise level."""
        coeffs = self.signal + self.noise / np.sqrt(n) if n > 0 else self.signal.copy()
        return Observation(coeffs, float(n), self.noise, self.signal, self.basis, self.seed, dict(self.meta))

    @cached_property
    def data_field(self) -> np.ndarray:
        """Grid values ``(Nt+1, n)`` whose basis coefficients are ``coeffs``."""
        return self.basis.synthesise(self.coeffs)

    def noise_pairing(self, values: np.ndarray) -> float:
        """``<W, g>``: the white noise paired with a field, through the basis."""
        return float(self.basis.analyse(values) @ self.noise)


def synthesize(spec: ProblemSpec, n: float, seed=None, *, rng=None, basis: SpaceTimeBasis | None = None) -> Observation:
    if n < 1:
        raise ValueError(f"noise level n must be >= 1, got {n}")
    if basis is None:
        basis = SpaceTimeBasis(spec.grid, spec.time)
    _check_basis(basis, spec)
    if rng is None:
        if seed is None:
            raise ValueError("need a seed or an rng")
        rng = make_rng(seed, "data")
    signal = basis.analyse(spec.solution.flat)
    z = rng.standard_normal(basis.size)
    obs = Observation(signal + z / np.sqrt(n), float(n), z, signal, basis, seed)
    obs.meta["tail_mass"] = basis.tail_mass(spec.solution.flat)
    return obs


def _check_basis(basis: SpaceTimeBasis, spec: ProblemSpec):
    if basis.grid != spec.grid or basis.time != spec.time:
        raise BasisMismatchError("observation basis does not match the solver grids")


def _pairings(obs: Observation, K: np.ndarray) -> tuple[float, float]:
    """``(<X, K>, |K|^2)`` at the truncated level."""
    b = obs.basis
    if b.complete:
        return (spacetime_inner_values(obs.data_field, K, b.grid, b.time),
                spacetime_inner_values(K, K, b.grid, b.time))
    c = b.analyse(K)
    return float(obs.coeffs @ c), float(c @ c)


def loglik(obs: Observation, spec: ProblemSpec) -> float:
    """``n <X, K> - (n/2) |K|^2`` with ``K = K_theta F``."""
    if obs.noise_level == 0:
        return 0.0
    _check_basis(obs.basis, spec)
    xk, kk = _pairings(obs, spec.solution.flat)
    return obs.noise_level * (xk - 0.5 * kk)


def loglik_ratio(obs: Observation, spec1: ProblemSpec, spec0: ProblemSpec) -> float:
    """``loglik(obs, spec1) - loglik(obs, spec0)`` without cancellation.

    Uses ``n <X - (K1 + K0)/2, K1 - K0>``.
    """
    if obs.noise_level == 0:
        return 0.0
    _check_basis(obs.basis, spec1)
    _check_basis(obs.basis, spec0)
    K1 = spec1.solution.flat
    K0 = spec0.solution.flat
    D = K1 - K0
    M = 0.5 * (K1 + K0)
    b = obs.basis
    if b.complete:
        val = spacetime_inner_values(obs.data_field - M, D, b.grid, b.time)
    else:
        val = float((obs.coeffs - b.analyse(M)) @ b.analyse(D))
    return obs.noise_level * val


def signal_hash(signal: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(signal, dtype="<f8").tobytes()).hexdigest()


def write_observation(obs: Observation, outdir, extra: dict | None = None) -> Path:
    """Write ``observation.csv`` and ``observation.json`` into ``outdir``."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    q, k = obs.basis.mode_labels()
    with open(out / "observation.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "time_mode", "space_mode", "coeff", "noise", "signal"])
        for i in range(obs.basis.size):
            w.writerow([i, q[i], k[i], repr(float(obs.coeffs[i])), repr(float(obs.noise[i])),
                        repr(float(obs.signal[i]))])
    manifest = {
        "noise_level": obs.noise_level,
        "seed": obs.seed,
        "basis": obs.basis.to_dict(),
        "signal_sha256": signal_hash(obs.signal),
        "tail_mass": obs.meta.get("tail_mass"),
    }
    if extra:
        manifest.update(extra)
    with open(out / "observation.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return out


def read_observation(indir) -> Observation:
    src = Path(indir)
    with open(src / "observation.json") as fh:
        manifest = json.load(fh)
    basis = SpaceTimeBasis.from_dict(manifest["basis"])
    rows = np.loadtxt(src / "observation.csv", delimiter=",", skiprows=1, ndmin=2)
    if rows.shape[0] != basis.size:
        raise BasisMismatchError(f"expected {basis.size} coefficients, found {rows.shape[0]}")
    obs = Observation(rows[:, 3].copy(), float(manifest["noise_level"]), rows[:, 4].copy(),
                      rows[:, 5].copy(), basis, manifest.get("seed"))
    if signal_hash(obs.signal) != manifest["signal_sha256"]:
        raise ValueError("signal hash mismatch: observation files are inconsistent")
    return obs
