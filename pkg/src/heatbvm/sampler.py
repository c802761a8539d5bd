"""Metropolis-within-Gibbs posterior sampler for ``(theta, F)``.

F is moved with a preconditioned Crank-Nicolson proposal in the coefficient
space of the truncated Gaussian series prior, theta with a random walk
reflected into the prior support. Both moves are accepted on the
log-likelihood ratio alone: pCN is reversible for the prior of F and the
uniform prior density of theta cancels.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .diagnostics import effective_sample_size, split_rhat
from .observation import Observation, loglik
from .pde import ProblemSpec
from .prior import LinkFunction, PriorConfig
from .rng import make_rng
from .spectral import TorusField

log = logging.getLogger(__name__)

TARGET_ACCEPT = 0.25


@dataclass(frozen=True)
class SamplerConfig:
    """``n_samples`` counts post burn-in iterations; every ``thin``-th is stored."""

    pcn_step: float = 0.1
    theta_step: float = 0.05
    burn_in: int = 2000
    n_samples: int = 18000
    thin: int = 10
    adapt: bool = True
    n_chains: int = 2
    seed: int = 0
    record_modes: int = 5
    init: str = "prior"

    def __post_init__(self):
        if not 0 < self.pcn_step < 1:
            raise ValueError(f"pcn_step must be in (0, 1), got {self.pcn_step}")
        if self.theta_step < 0:
            raise ValueError(f"theta_step must be >= 0, got {self.theta_step}")
        if self.burn_in < 0 or self.n_samples < 1 or self.thin < 1:
            raise ValueError("need burn_in >= 0, n_samples >= 1 and thin >= 1")
        if self.n_chains < 1:
            raise ValueError(f"n_chains must be >= 1, got {self.n_chains}")
        if self.init not in ("prior", "truth"):
            raise ValueError(f"init must be 'prior' or 'truth', got {self.init!r}")


@dataclass
class PosteriorTarget:
    """Data, prior and the fixed parts of the forward model."""

    obs: Observation
    prior: PriorConfig
    u0: TorusField
    link: LinkFunction = field(default_factory=LinkFunction)
    prior_n: float | None = None
    truth_coeffs: np.ndarray | None = None

    def __post_init__(self):
        self.grid = self.u0.grid
        self.time = self.obs.basis.time
        n = self.obs.noise_level if self.prior_n is None else self.prior_n
        self.coeff_std = self.prior.coefficient_std(self.grid, max(float(n), 1.0))
        self.n_nonfinite = 0
        if self.truth_coeffs is not None:
            c0 = np.asarray(self.truth_coeffs, dtype=float)
            self._truth_head = c0[: self.n_modes]
            self._truth_tail_sq = float(np.sum(c0[self.n_modes:] ** 2))

    def truth_distance(self, coeffs: np.ndarray) -> float:
        """``|F - F0|_2`` by Parseval, counting modes of F0 beyond the prior cutoff."""
        return math.sqrt(float(np.sum((coeffs - self._truth_head) ** 2)) + self._truth_tail_sq)

    @property
    def n_modes(self) -> int:
        return len(self.coeff_std)

    def spec(self, theta: float, coeffs: np.ndarray) -> ProblemSpec:
        return ProblemSpec(theta, TorusField.from_coeffs(self.grid, coeffs), self.u0, self.time, self.link)

    def loglik(self, theta: float, coeffs: np.ndarray) -> float:
        try:
            val = loglik(self.obs, self.spec(theta, coeffs))
        except (ValueError, FloatingPointError) as exc:
            log.warning("log-likelihood failed at theta=%r: %s", theta, exc)
            val = -math.inf
        if not math.isfinite(val):
            self.n_nonfinite += 1
        return val


@dataclass
class ChainState:
    theta: float
    coeffs: np.ndarray
    loglik_cached: float
    iteration: int = 0

    def F(self, grid) -> TorusField:
        return TorusField.from_coeffs(grid, self.coeffs)


def reflect(x: float, lo: float, hi: float) -> float:
    """Fold ``x`` into ``[lo, hi]`` by repeated reflection at the end points."""
    width = hi - lo
    y = math.fmod(x - lo, 2.0 * width)
    if y < 0:
        y += 2.0 * width
    if y > width:
        y = 2.0 * width - y
    return lo + y


def _accept(ll_new: float, ll_old: float, rng) -> bool:
    if not math.isfinite(ll_new):
        log.warning("non-finite log-likelihood proposal rejected")
        return False
    return math.log(rng.random()) < ll_new - ll_old


def pcn_update(state: ChainState, target: PosteriorTarget, rng, step: float) -> tuple[ChainState, bool]:
    """One pCN move for F: ``c' = sqrt(1 - s^2) c + s zeta`` with zeta a prior draw."""
    zeta = target.coeff_std * rng.standard_normal(target.n_modes)
    prop = math.sqrt(1.0 - step * step) * state.coeffs + step * zeta
    ll = target.loglik(state.theta, prop)
    if _accept(ll, state.loglik_cached, rng):
        return ChainState(state.theta, prop, ll, state.iteration), True
    return state, False


def theta_update(state: ChainState, target: PosteriorTarget, rng, step: float) -> tuple[ChainState, bool]:
    """Reflected Gaussian random walk for theta."""
    lo, hi = target.prior.theta_min, target.prior.theta_max
    prop = reflect(state.theta + step * rng.standard_normal(), lo, hi)
    if step == 0:
        return state, True
    ll = target.loglik(prop, state.coeffs)
    if _accept(ll, state.loglik_cached, rng):
        return ChainState(prop, state.coeffs, ll, state.iteration), True
    return state, False


@dataclass
class ChainResult:
    theta: np.ndarray
    coeffs: np.ndarray
    loglik: np.ndarray
    iteration: np.ndarray
    accept_pcn: float
    accept_theta: float
    pcn_step: float
    theta_step: float
    rejected_nonfinite: int = 0
    f_dist: np.ndarray | None = None


@dataclass
class SampleStore:
    chains: list[ChainResult]
    config: SamplerConfig

    @property
    def theta(self) -> np.ndarray:
        """Pooled theta draws from all chains."""
        return np.concatenate([c.theta for c in self.chains])

    @property
    def coeffs(self) -> np.ndarray:
        return np.concatenate([c.coeffs for c in self.chains])

    @property
    def f_dist(self) -> np.ndarray | None:
        if any(c.f_dist is None for c in self.chains):
            return None
        return np.concatenate([c.f_dist for c in self.chains])

    def theta_ess(self) -> float:
        return effective_sample_size([c.theta for c in self.chains])

    def theta_rhat(self) -> float:
        if len(self.chains) < 2:
            return float("nan")
        return split_rhat(np.array([c.theta for c in self.chains]))

    def diagnostics(self) -> dict:
        return {
            "theta_ess": self.theta_ess(),
            "theta_rhat": self.theta_rhat(),
            "chains": [
                {
                    "accept_pcn": c.accept_pcn,
                    "accept_theta": c.accept_theta,
                    "pcn_step": c.pcn_step,
                    "theta_step": c.theta_step,
                    "rejected_nonfinite": c.rejected_nonfinite,
                    "n_stored": len(c.theta),
                }
                for c in self.chains
            ],
            "config": asdict(self.config),
        }


def _adapt(step, rate, k, lo, hi):
    # Robbins-Monro on log step with decaying gain
    gain = 1.0 / math.sqrt(k + 1)
    return min(max(step * math.exp(gain * (rate - TARGET_ACCEPT)), lo), hi)


def initial_state(target: PosteriorTarget, cfg: SamplerConfig, rng, truth=None) -> ChainState:
    if cfg.init == "truth":
        if truth is None:
            raise ValueError("init='truth' needs the true (theta, F)")
        theta = float(truth[0])
        coeffs = np.asarray(truth[1].coeffs[: target.n_modes], dtype=float)
    else:
        theta = float(rng.uniform(target.prior.theta_min, target.prior.theta_max))
        coeffs = target.coeff_std * rng.standard_normal(target.n_modes)
    return ChainState(theta, coeffs, target.loglik(theta, coeffs), 0)


def run_single_chain(target: PosteriorTarget, cfg: SamplerConfig, rng, state: ChainState,
                     adapt_every: int = 50) -> ChainResult:
    s_pcn, s_theta = cfg.pcn_step, cfg.theta_step
    width = target.prior.theta_max - target.prior.theta_min
    n_keep = cfg.n_samples // cfg.thin
    rec = min(cfg.record_modes, target.n_modes)
    th = np.empty(n_keep)
    co = np.empty((n_keep, rec))
    ll = np.empty(n_keep)
    it = np.empty(n_keep, dtype=np.int64)
    track = target.truth_coeffs is not None
    fd = np.empty(n_keep) if track else None
    acc_p = acc_t = 0
    win_p = win_t = 0
    nonfinite0 = target.n_nonfinite
    k = 0
    total = cfg.burn_in + cfg.n_samples
    for i in range(total):
        state, a = pcn_update(state, target, rng, s_pcn)
        win_p += a
        state, b = theta_update(state, target, rng, s_theta)
        win_t += b
        state.iteration = i + 1
        if i < cfg.burn_in:
            if cfg.adapt and (i + 1) % adapt_every == 0:
                blk = (i + 1) // adapt_every
                s_pcn = _adapt(s_pcn, win_p / adapt_every, blk, 1e-4, 0.999)
                if s_theta > 0:
                    s_theta = _adapt(s_theta, win_t / adapt_every, blk, 1e-6, width)
                win_p = win_t = 0
            continue
        acc_p += a
        acc_t += b
        j = i - cfg.burn_in
        if (j + 1) % cfg.thin == 0 and k < n_keep:
            th[k] = state.theta
            co[k] = state.coeffs[:rec]
            ll[k] = state.loglik_cached
            it[k] = i + 1
            if track:
                fd[k] = target.truth_distance(state.coeffs)
            k += 1
    return ChainResult(th, co, ll, it, acc_p / cfg.n_samples, acc_t / cfg.n_samples, s_pcn, s_theta,
                       target.n_nonfinite - nonfinite0, fd)


def run_chain(target: PosteriorTarget, cfg: SamplerConfig, stream=(), truth=None) -> SampleStore:
    """Run ``cfg.n_chains`` chains; chain ``c`` uses ``make_rng(seed, *stream, "chain", c)``."""
    results = []
    for c in range(cfg.n_chains):
        rng = make_rng(cfg.seed, *stream, "chain", c)
        state = initial_state(target, cfg, rng, truth)
        results.append(run_single_chain(target, cfg, rng, state))
    return SampleStore(results, cfg)
