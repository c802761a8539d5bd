"""Link function, Gaussian series prior for the latent field and prior on theta."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .rng import make_rng
from .spectral import TorusField, TorusGrid, sobolev_norm, spectral_basis


@dataclass(frozen=True)
class LinkFunction:
    """``Phi(x) = f_min + log(1 + e^x)``.

    Phi maps the real line onto ``(f_min, inf)``; its first derivative is the
    logistic function (bounded, strictly positive) and all higher derivatives
    are bounded as well.
    """

    f_min: float = 0.5

    def __post_init__(self):
        if not self.f_min > 0:
            raise ValueError(f"f_min must be positive, got {self.f_min}")

    @staticmethod
    def excess(x):
        """``Phi(x) - f_min`` evaluated without cancellation."""
        return np.logaddexp(0.0, x)

    def __call__(self, x):
        return self.f_min + np.logaddexp(0.0, x)

    phi = __call__

    @staticmethod
    def prime(x):
        return expit(x)

    @staticmethod
    def second(x):
        s = expit(x)
        return s * (1.0 - s)

    # sup-norm bounds of Phi', Phi''
    PRIME_BOUND = 1.0
    SECOND_BOUND = 0.25


def phi(x, f_min=0.5):
    return LinkFunction(f_min)(x)


def phi_prime(x):
    return LinkFunction.prime(x)


@dataclass(frozen=True)
class RegularityParams:
    """Smoothness indices: ``beta > 2 + d`` and ``beta + d/2 < alpha < xi - 4``."""

    beta: float = 4.0
    alpha: float = 5.0
    xi: float = 12.0
    dim: int = 1

    def __post_init__(self):
        d = self.dim
        if not self.beta > 2 + d:
            raise ValueError(f"need beta > 2 + d = {2 + d}, got beta={self.beta}")
        if not self.beta + d / 2 < self.alpha:
            raise ValueError(f"need alpha > beta + d/2 = {self.beta + d / 2}, got alpha={self.alpha}")
        if not self.alpha < self.xi - 4:
            raise ValueError(f"need alpha < xi - 4 = {self.xi - 4}, got alpha={self.alpha}")

    @property
    def direct_rate_exponent(self) -> float:
        """Exponent of ``delta_n = n^(-(2+alpha)/(2 alpha + 4 + d))``."""
        return -(2.0 + self.alpha) / (2.0 * self.alpha + 4.0 + self.dim)

    @property
    def contraction_exponent(self) -> float:
        """Exponent of the inverse-problem rate ``delta_n^(beta/(2+beta))``."""
        return self.beta / (2.0 + self.beta) * self.direct_rate_exponent


@dataclass(frozen=True)
class PriorConfig:
    alpha: float = 5.0
    theta_min: float = 0.5
    theta_max: float = 4.0
    mode_cutoff: int | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0 < self.theta_min < self.theta_max:
            raise ValueError(f"need 0 < theta_min < theta_max, got [{self.theta_min}, {self.theta_max}]")
        if self.mode_cutoff is not None and self.mode_cutoff < 1:
            raise ValueError(f"mode_cutoff must be >= 1, got {self.mode_cutoff}")

    def rescale_exponent(self, dim: int) -> float:
        return dim / (4.0 * self.alpha + 2.0 * dim + 8.0)

    def n_modes(self, grid: TorusGrid) -> int:
        if self.mode_cutoff is None:
            return grid.size
        if self.mode_cutoff > grid.size:
            raise ValueError(f"mode_cutoff {self.mode_cutoff} exceeds the {grid.size} grid modes")
        return self.mode_cutoff

    def coefficient_std(self, grid: TorusGrid, n: float = 1.0) -> np.ndarray:
        """Prior standard deviations of the leading basis coefficients of F.

        Includes the ``n^(-d/(4 alpha + 2d + 8))`` rescaling; ``n = 1`` gives the
        base prior.
        """
        J = self.n_modes(grid)
        lam = spectral_basis(grid).eigenvalues[:J]
        return rescale_factor(n, self, grid.dim) * (1.0 + lam) ** (-self.alpha / 2.0)


def rescale_factor(n: float, cfg: PriorConfig, dim: int) -> float:
    if n < 1:
        raise ValueError(f"noise level n must be >= 1 for the prior rescaling, got {n}")
    return float(n) ** (-cfg.rescale_exponent(dim))


def sample_base_prior(grid: TorusGrid, alpha: float, seed=None, *, rng=None, n_modes=None) -> TorusField:
    """Draw ``F' = sum_k (1 + lambda_k)^(-alpha/2) Z_k e_k`` truncated at ``n_modes``.

    Either ``seed`` (an int, giving a fresh stream) or an explicit ``rng``
    (``numpy.random.Generator``) must be supplied.
    """
    if alpha <= grid.dim / 2:
        raise ValueError(f"alpha must exceed d/2 = {grid.dim / 2} for continuous paths")
    if rng is None:
        if seed is None:
            raise ValueError("need a seed or an rng")
        rng = make_rng(seed, "prior")
    J = grid.size if n_modes is None else n_modes
    lam = spectral_basis(grid).eigenvalues[:J]
    z = rng.standard_normal(J)
    return TorusField.from_coeffs(grid, (1.0 + lam) ** (-alpha / 2.0) * z)


def rescale_for_n(F_prime: TorusField, n: float, cfg: PriorConfig) -> TorusField:
    return F_prime * rescale_factor(n, cfg, F_prime.grid.dim)


def theta_prior_logdensity(theta: float, cfg: PriorConfig) -> float:
    """Uniform density on ``[theta_min, theta_max]``; ``-inf`` outside."""
    if cfg.theta_min <= theta <= cfg.theta_max:
        return -math.log(cfg.theta_max - cfg.theta_min)
    return -math.inf


def rkhs_norm(h: TorusField, alpha: float) -> float:
    """RKHS norm of the base prior, i.e. the ``H^alpha`` sequence norm."""
    return sobolev_norm(h, alpha)
