"""Posterior experiments: BvM diagnostics, contraction rates and stability probes.

Every posterior job is keyed by ``(n_index, replicate)`` and draws its data
and chains from streams derived from the experiment seed and that key alone,
so results do not depend on how jobs are scheduled over worker processes.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .config import ExperimentConfig, config_from_dict, trig_field
from .observation import SpaceTimeBasis, synthesize
from .pde import ProblemSpec
from .prior import sample_base_prior
from .rng import make_rng
from .sampler import PosteriorTarget, run_chain
from .semiparametric import InfoReport, identifiability_check, least_favorable_direction
from .spectral import TorusField, sobolev_norm, spacetime_inner_values

log = logging.getLogger(__name__)


class DegenerateProblemError(RuntimeError):
    """The truth violates the identifiability condition; theta is not estimable."""


class NumericalFailure(RuntimeError):
    pass


def truth_info(cfg: ExperimentConfig) -> InfoReport:
    """Efficient information at the truth; raises for a degenerate problem."""
    spec = cfg.truth()
    ident = identifiability_check(spec, tol=cfg.info.identifiability_tol)
    if ident.degenerate:
        raise DegenerateProblemError(
            "degenerate problem: " + ident.reason
            + " (u0 must not lie in an eigenspace of the Schrodinger operator (theta/2) Lap - Phi(F))"
        )
    rep = least_favorable_direction(spec, cfg.info.cg_tol, cfg.info.max_iters, cfg.info.precondition,
                                     ident_tol=cfg.info.identifiability_tol)
    if not rep.eff_info > 0:
        raise DegenerateProblemError(f"efficient information is not positive ({rep.eff_info:.3g})")
    if not rep.converged:
        log.warning("CG for the least favourable direction stopped at relative residual %.3g", rep.cg_residual)
    return rep


@dataclass
class BvmResult:
    n: float
    replicate: int
    post_mean: float
    post_sd: float
    post_median: float
    n_draws: int
    ess: float
    rhat: float
    accept_pcn: float
    accept_theta: float
    delta_n: float
    predicted_center: float
    predicted_var: float
    ks_distance: float
    tv_estimate: float
    ci_low: float
    ci_high: float
    ci_covers: bool
    median_error: float


def scott_tv(z: np.ndarray) -> float:
    """Histogram estimate of the total variation distance to N(0, 1).

    Bin width ``3.49 sd N^(-1/3)``; normal mass outside the histogram range
    counts fully.
    """
    z = np.asarray(z, dtype=float)
    N = len(z)
    sd = z.std(ddof=1)
    lo, hi = float(z.min()), float(z.max())
    if N < 2 or sd == 0 or hi == lo:
        return 1.0
    width = 3.49 * sd * N ** (-1.0 / 3.0)
    nb = max(1, int(math.ceil((hi - lo) / width)))
    edges = lo + width * np.arange(nb + 1)
    counts, _ = np.histogram(z, bins=edges)
    p_hat = counts / N
    p_norm = np.diff(stats.norm.cdf(edges))
    outside = 1.0 - p_norm.sum()
    return float(0.5 * (np.abs(p_hat - p_norm).sum() + outside))


def bvm_statistics(theta: np.ndarray, theta0: float, n: float, eff_info: float, delta_n: float) -> dict:
    center = theta0 + delta_n / math.sqrt(n)
    z = math.sqrt(n * eff_info) * (theta - center)
    lo, hi = np.quantile(theta, [0.025, 0.975])
    return {
        "predicted_center": center,
        "predicted_var": 1.0 / (eff_info * n),
        "ks_distance": float(stats.kstest(z, "norm").statistic),
        "tv_estimate": scott_tv(z),
        "ci_low": float(lo),
        "ci_high": float(hi),
        "ci_covers": bool(lo <= theta0 <= hi),
    }


def _posterior_job(args):
    raw, n_index, replicate, score_flat, eff_info = args
    cfg = config_from_dict(raw)
    n = cfg.n_grid[n_index]
    spec = cfg.truth()
    basis = SpaceTimeBasis(cfg.grid, cfg.time, cfg.j_space, cfg.j_time)
    obs = synthesize(spec, n, seed=cfg.seed, rng=make_rng(cfg.seed, "data", n_index, replicate), basis=basis)
    F0c = spec.F.coeffs
    target = PosteriorTarget(obs, cfg.prior, spec.u0, spec.link, truth_coeffs=F0c)
    store = run_chain(target, cfg.sampler, stream=("posterior", n_index, replicate))
    theta = store.theta
    delta = obs.noise_pairing(score_flat) / eff_info
    st = bvm_statistics(theta, cfg.theta0, n, eff_info, delta)
    err = np.abs(theta - cfg.theta0) + store.f_dist
    diag = store.diagnostics()
    return BvmResult(
        n=float(n),
        replicate=replicate,
        post_mean=float(theta.mean()),
        post_sd=float(theta.std(ddof=1)),
        post_median=float(np.median(theta)),
        n_draws=int(theta.size),
        ess=float(diag["theta_ess"]),
        rhat=float(diag["theta_rhat"]),
        accept_pcn=float(np.mean([c["accept_pcn"] for c in diag["chains"]])),
        accept_theta=float(np.mean([c["accept_theta"] for c in diag["chains"]])),
        delta_n=float(delta),
        median_error=float(np.median(err)),
        **st,
    )


def run_posterior_jobs(cfg: ExperimentConfig, workers: int = 1, report: InfoReport | None = None) -> list[BvmResult]:
    """All ``(n, replicate)`` posterior runs, ordered by that key."""
    report = truth_info(cfg) if report is None else report
    score = np.asarray(report.score.flat)
    jobs = [(cfg.to_dict(), i, r, score, report.eff_info)
            for i in range(len(cfg.n_grid)) for r in range(cfg.replicates)]
    if workers <= 1:
        results = [_posterior_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_posterior_job, jobs))
    results.sort(key=lambda b: (b.n, b.replicate))
    return results


def summarise_bvm(results: list[BvmResult], eff_info: float) -> list[dict]:
    """Per-n medians, coverage and the spread of the centring statistic."""
    out = []
    for n in sorted({b.n for b in results}):
        rows = [b for b in results if b.n == n]
        d = np.array([b.delta_n for b in rows])
        R = len(d)
        var = float(d.var(ddof=1)) if R > 1 else float("nan")
        var_se = var * math.sqrt(2.0 / (R - 1)) if R > 1 else float("nan")
        out.append({
            "n": n,
            "replicates": R,
            "median_ks": float(np.median([b.ks_distance for b in rows])),
            "median_tv": float(np.median([b.tv_estimate for b in rows])),
            "coverage": float(np.mean([b.ci_covers for b in rows])),
            "delta_var": var,
            "delta_var_se": var_se,
            "inverse_eff_info": 1.0 / eff_info,
            "median_post_sd": float(np.median([b.post_sd for b in rows])),
            "predicted_sd": math.sqrt(1.0 / (eff_info * n)),
            "median_error": float(np.median([b.median_error for b in rows])),
        })
    return out


def run_bvm(cfg: ExperimentConfig, workers: int = 1) -> tuple[list[BvmResult], list[dict], InfoReport]:
    report = truth_info(cfg)
    results = run_posterior_jobs(cfg, workers, report)
    return results, summarise_bvm(results, report.eff_info), report


def fit_slope(n, y) -> float:
    return float(np.polyfit(np.log(np.asarray(n, float)), np.log(np.asarray(y, float)), 1)[0])


def contraction_table(cfg: ExperimentConfig, results: list[BvmResult]) -> dict:
    summary = summarise_bvm(results, 1.0)
    ns = [s["n"] for s in summary]
    errs = [s["median_error"] for s in summary]
    reg = cfg.regularity
    return {
        "n": ns,
        "median_error": errs,
        "fitted_slope": fit_slope(ns, errs) if len(ns) > 1 else float("nan"),
        "direct_rate_exponent": reg.direct_rate_exponent,
        "theoretical_exponent": reg.contraction_exponent,
        "delta_n": [n ** reg.direct_rate_exponent for n in ns],
    }


def run_contraction(cfg: ExperimentConfig, workers: int = 1, results=None) -> tuple[list[BvmResult], dict]:
    if results is None:
        results = run_posterior_jobs(cfg, workers)
    return results, contraction_table(cfg, results)


def _forward_distance(a: ProblemSpec, b: ProblemSpec) -> float:
    D = a.solution.flat - b.solution.flat
    return math.sqrt(max(spacetime_inner_values(D, D, a.grid, a.time), 0.0))


def run_stability_probe(cfg: ExperimentConfig) -> tuple[list[dict], dict]:
    """Forward and parameter distances along shrinking random perturbations.

    Direction 0 perturbs theta only; the others perturb theta by a standard
    normal amount and F by a base-prior draw normalised to unit L2 norm.
    """
    spec0 = cfg.truth()
    beta = cfg.regularity.beta
    power = beta / (beta + 2.0)
    rows = []
    for k in range(cfg.stability.directions + 1):
        rng = make_rng(cfg.seed, "stability", k)
        if k == 0:
            dtheta, G = 1.0, TorusField.constant(cfg.grid, 0.0)
        else:
            dtheta = float(rng.standard_normal())
            G = sample_base_prior(cfg.grid, cfg.prior.alpha, rng=rng)
            G = G * (1.0 / math.sqrt(float(np.sum(G.coeffs ** 2))))
        for s in (0.0,) + tuple(cfg.stability.scales):
            th = cfg.theta0 + s * dtheta
            spec = ProblemSpec(th, spec0.F + s * G, spec0.u0, spec0.time, spec0.link)
            fwd = _forward_distance(spec, spec0)
            dF = s * G
            param = abs(th - cfg.theta0) + math.sqrt(float(np.sum(dF.coeffs ** 2)))
            weak = abs(th - cfg.theta0) + sobolev_norm(dF, -2.0)
            rows.append({
                "direction": k,
                "s": s,
                "theta": th,
                "forward_distance": fwd,
                "param_distance": param,
                "stability_ratio": param / fwd ** power if fwd > 0 else float("nan"),
                "lipschitz_ratio": fwd / weak if weak > 0 else float("nan"),
            })
    live = [r for r in rows if r["s"] > 0]
    stab = np.array([r["stability_ratio"] for r in live])
    lip = np.array([r["lipschitz_ratio"] for r in live])
    theta_only = [r for r in live if r["direction"] == 0]
    summary = {
        "stability_exponent": power,
        "stability_ratio_max": float(stab.max()),
        "stability_ratio_min": float(stab.min()),
        "stability_spread": float(stab.max() / stab.min()),
        "lipschitz_ratio_max": float(lip.max()),
        "lipschitz_ratio_min": float(lip.min()),
        "lipschitz_spread": float(lip.max() / lip.min()),
        "theta_only_slope": fit_slope([r["s"] for r in theta_only], [r["forward_distance"] for r in theta_only]),
    }
    return rows, summary


def lan_table(cfg: ExperimentConfig, report: InfoReport | None = None) -> tuple[list[dict], dict]:
    """LAN remainder against n for one stored noise draw at the truth."""
    from .semiparametric import kdot, lan_remainder

    spec = cfg.truth()
    basis = SpaceTimeBasis(cfg.grid, cfg.time, cfg.j_space, cfg.j_time)
    obs = synthesize(spec, 1.0, seed=cfg.seed, rng=make_rng(cfg.seed, "lan"), basis=basis)
    G = trig_field(cfg.lan.direction, cfg.grid)
    kd = kdot(spec)
    rows = [{"n": n, "remainder": lan_remainder(spec, cfg.lan.s, G, n, obs, kd=kd)} for n in cfg.lan.n_values]
    ns = [r["n"] for r in rows]
    rem = [r["remainder"] for r in rows]
    ok = all(v > 0 for v in rem)
    return rows, {"slope": fit_slope(ns, rem) if ok and len(ns) > 1 else float("nan"), "s": cfg.lan.s,
                  "direction": cfg.lan.direction}


def result_dicts(results) -> list[dict]:
    return [asdict(r) for r in results]
