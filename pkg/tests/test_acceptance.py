"""Acceptance criteria 1-12, one PASS/FAIL line each.

The lines are printed as they are produced and repeated in the
"acceptance criteria" section at the end of the pytest run. Criteria 10 and
11 run the full posterior experiment (about 40 minutes on one core) and are
skipped unless HEATBVM_EXTENDED=1.
"""

import filecmp
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from conftest import ACCEPTANCE_LINES, SMALL, TWO_PI, constant_F_for, default_truth, make_spec, random_spec, write_ini
from heatbvm.cli import main
from heatbvm.config import default_config
from heatbvm.experiments import contraction_table, fit_slope, run_posterior_jobs, summarise_bvm, truth_info
from heatbvm.feynman_kac import FKEstimator, solver_value
from heatbvm.observation import synthesize
from heatbvm.prior import PriorConfig
from heatbvm.rng import make_rng
from heatbvm.sampler import PosteriorTarget, SamplerConfig, run_chain
from heatbvm.semiparametric import (
    apply_I,
    apply_I_star,
    fisher_information,
    kdot,
    lan_remainder,
    least_favorable_direction,
)
from heatbvm.spectral import SpaceTimeField, TorusField, inner_l2, norm_l2, spacetime_inner, spacetime_norm


def report(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_01_analytic_forward_accuracy():
    t0 = time.perf_counter()
    spec = make_spec(theta=2.0, F=constant_F_for(1.0), u0=1.0, nx=64, nt=4096)
    t = spec.time.times[:, None]
    err_const = float(np.max(np.abs(spec.solution.values - np.exp(-t))))
    two = make_spec(theta=2.0, F=constant_F_for(1.0), u0=lambda x: 2 + np.cos(TWO_PI * x), nx=64, nt=4096)
    x = two.grid.coordinates()[0]
    exact = 2 * np.exp(-t) + np.exp(-(4 * np.pi ** 2 + 1) * t) * np.cos(TWO_PI * x)
    err_two = float(np.max(np.abs(two.solution.values - exact)))
    secs = time.perf_counter() - t0
    ok = err_const <= 1e-8 and err_two <= 1e-6 and secs < 10
    report(1, "analytic forward accuracy", ok,
           f"constant case {err_const:.1e} (<= 1e-8), two-mode {err_two:.1e} (<= 1e-6), {secs:.1f} s (< 10 s)")


def test_02_scheme_order():
    # non-commuting absorption; reference from the same scheme at Nt = 2^15
    ref = default_truth(64, 2 ** 15).solution.values[-1]
    errs = []
    for nt in (128, 256, 512, 1024):
        errs.append(float(np.max(np.abs(default_truth(64, nt).solution.values[-1] - ref))))
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    ok = all(r >= 3.5 for r in ratios)
    report(2, "scheme order", ok,
           "errors at Nt=128..1024 " + ", ".join(f"{e:.2e}" for e in errs)
           + "; ratios " + ", ".join(f"{r:.2f}" for r in ratios) + " (each >= 3.5)")


def test_03_adjoint_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for i in range(50):
        dim = 1 if i % 5 else 2
        spec = random_spec(rng, nx=32 if dim == 1 else 16, nt=128, dim=dim)
        h = TorusField(spec.grid, rng.standard_normal(spec.grid.shape))
        w = SpaceTimeField(spec.grid, spec.time, rng.standard_normal((129, spec.grid.size)))
        gap = abs(spacetime_inner(apply_I(spec, h), w) - inner_l2(h, apply_I_star(spec, w)))
        worst = max(worst, gap / (norm_l2(h) * spacetime_norm(w)))
    secs = time.perf_counter() - t0
    ok = worst <= 1e-6 and secs < 60
    report(3, "adjoint identity", ok, f"worst relative gap {worst:.1e} over 50 triples (<= 1e-6), {secs:.1f} s")


def test_04_derivative_orders():
    t0 = time.perf_counter()
    spec = default_truth()
    kd = kdot(spec).flat
    G = TorusField.from_function(spec.grid, lambda x: np.cos(TWO_PI * x) - 0.5 * np.sin(3 * TWO_PI * x))
    IG = apply_I(spec, G).flat
    steps = np.array([0.08, 0.04, 0.02, 0.01, 0.005])
    rk, ri = [], []
    K0 = spec.solution.flat
    for s in steps:
        d = spec.with_theta(spec.theta + s).solution.flat - K0 - s * kd
        rk.append(spacetime_norm(SpaceTimeField(spec.grid, spec.time, d)))
        d = spec.with_F(spec.F + G * s).solution.flat - K0 - s * IG
        ri.append(spacetime_norm(SpaceTimeField(spec.grid, spec.time, d)))
    sk, si = fit_slope(steps, rk), fit_slope(steps, ri)
    secs = time.perf_counter() - t0
    ok = abs(sk - 2) <= 0.2 and abs(si - 2) <= 0.2 and secs < 120
    report(4, "derivative orders", ok, f"theta remainder slope {sk:.3f}, F remainder slope {si:.3f} (2 +- 0.2), "
                                       f"{secs:.1f} s")


def test_05_degenerate_efficiency():
    spec = make_spec(theta=2.0, F=constant_F_for(1.0), u0=1.0, nx=64, nt=256)
    rep = least_favorable_direction(spec)
    ok = rep.eff_info <= 1e-8 and rep.identifiable.degenerate
    report(5, "degenerate efficiency", ok,
           f"efficient information {rep.eff_info:.1e} (<= 1e-8), flagged degenerate: {rep.identifiable.degenerate}")


def _dense_gamma(spec):
    n = spec.grid.size
    A = np.array([apply_I(spec, np.eye(n)[i]).flat.ravel() for i in range(n)]).T
    w = np.repeat(spec.time.weights, n) * spec.grid.cell_volume
    return np.linalg.solve(A.T @ (w[:, None] * A), A.T @ (w * kdot(spec).flat.ravel()))


def test_06_minimality_of_gamma():
    spec = default_truth()
    rep = least_favorable_direction(spec)
    kd = kdot(spec)
    rng = np.random.default_rng(6)
    worst = math.inf
    for _ in range(20):
        G = TorusField.from_coeffs(spec.grid, rng.standard_normal(64) * (1 + np.arange(64)) ** -1.5)
        worst = min(worst, fisher_information(spec, G, kd) + 1e-8 - rep.eff_info)
    small = make_spec(theta=2.0, F=lambda x: 0.5 * np.cos(TWO_PI * x) + 0.3 * np.sin(2 * TWO_PI * x),
                      nx=16, nt=256)
    srep = least_favorable_direction(small)
    g_dense = _dense_gamma(small)
    rel = float(np.linalg.norm(srep.gamma.values.ravel() - g_dense) / np.linalg.norm(g_dense))
    ok = worst >= 0 and rep.cg_residual <= 1e-8 and rep.converged and rel <= 1e-5
    report(6, "minimality of gamma", ok,
           f"min over 20 G of |kdot+IG|^2 + 1e-8 - eff_info = {worst:.2e} (>= 0), CG residual {rep.cg_residual:.1e} "
           f"in {rep.cg_iters} iterations (<= 1e-8), dense oracle at Nx=16 rel. error {rel:.1e} (<= 1e-5)")


def test_07_lan_remainder_decay():
    t0 = time.perf_counter()
    spec = default_truth()
    obs = synthesize(spec, 1.0, rng=make_rng(7, "lan"))
    G = TorusField.from_function(spec.grid, lambda x: 0.5 * np.cos(TWO_PI * x))
    kd = kdot(spec)
    ns = [1e2, 1e3, 1e4, 1e5]
    rem = [lan_remainder(spec, 1.0, G, n, obs, kd) for n in ns]
    slope = fit_slope(ns, rem)
    secs = time.perf_counter() - t0
    ok = abs(slope + 0.5) <= 0.2 and secs < 120
    report(7, "LAN remainder decay", ok, "remainders " + ", ".join(f"{r:.2e}" for r in rem)
           + f"; slope {slope:.3f} (-0.5 +- 0.2), {secs:.1f} s")


def test_08_feynman_kac_agreement():
    t0 = time.perf_counter()
    spec = default_truth()
    est = FKEstimator(spec)
    place = make_rng(8, "probes")
    worst, worst_z = -math.inf, 0.0
    for i in range(100):
        x = float(place.random())
        t = int(place.integers(1, spec.time.steps + 1)) * spec.time.dt
        mean, se = est.estimate([x], t, 100_000, make_rng(8, "fk", i))
        gap = abs(mean - solver_value(spec, [x], t))
        worst = max(worst, gap - 3 * se - 5e-3)
        worst_z = max(worst_z, gap / se)
    secs = time.perf_counter() - t0
    ok = worst <= 0 and secs < 300
    report(8, "Feynman-Kac agreement", ok,
           f"max(|solver - FK| - 3 se - 5e-3) = {worst:.2e} (<= 0) over 100 probes, largest |z| {worst_z:.2f}, "
           f"{secs:.0f} s (< 300 s)")


def test_09_pcn_prior_invariance():
    spec = default_truth()
    obs = synthesize(spec, 1.0, seed=9).at_noise_level(0)
    target = PosteriorTarget(obs, PriorConfig(), spec.u0)
    cfg = SamplerConfig(pcn_step=0.9, theta_step=2.0, burn_in=0, n_samples=100_000, thin=10, adapt=False,
                        n_chains=1, record_modes=5, seed=9)
    store = run_chain(target, cfg, stream=("invariance",))
    sd = target.coeff_std[:5]
    pv = [stats.kstest(store.coeffs[:, k] / sd[k], "norm").pvalue for k in range(5)]
    pt = stats.kstest(store.theta, "uniform", args=(0.5, 3.5)).pvalue
    ok = min(pv) > 0.01 and len(store.theta) == 10_000
    report(9, "pCN prior invariance", ok,
           "KS p-values of the 5 leading modes " + ", ".join(f"{p:.3f}" for p in pv)
           + f" (> 0.01) over {len(store.theta)} samples; theta vs uniform p = {pt:.3f}")


@pytest.fixture(scope="module")
def default_posterior_runs():
    cfg = default_config()
    rep = truth_info(cfg)
    t0 = time.perf_counter()
    results = run_posterior_jobs(cfg, 1, rep)
    return cfg, rep, results, time.perf_counter() - t0


@pytest.mark.extended
def test_10_bvm_trend(default_posterior_runs):
    cfg, rep, results, secs = default_posterior_runs
    summary = summarise_bvm(results, rep.eff_info)
    ks = [s["median_ks"] for s in summary]
    decreasing = all(b < a for a, b in zip(ks, ks[1:]))
    last = summary[-1]
    cover_ok = 0.85 <= last["coverage"] <= 1.0
    var_ok = all(abs(s["delta_var"] - s["inverse_eff_info"]) <= 3 * s["delta_var_se"] for s in summary)
    detail = ("median KS " + ", ".join(f"{k:.3f}" for k in ks) + f" (strictly decreasing: {decreasing}); "
              f"coverage at n={last['n']:.0f}: {last['coverage']:.2f} (in [0.85, 1]); Var(Delta) "
              + ", ".join(f"{s['delta_var']:.0f}+-{s['delta_var_se']:.0f}" for s in summary)
              + f" vs 1/eff_info {1 / rep.eff_info:.0f}; posterior sd "
              + ", ".join(f"{s['median_post_sd']:.3f}" for s in summary) + " vs predicted "
              + ", ".join(f"{s['predicted_sd']:.3f}" for s in summary) + f"; {secs / 60:.0f} min")
    report(10, "BvM trend", decreasing and cover_ok and var_ok, detail)


@pytest.mark.extended
def test_11_contraction_trend(default_posterior_runs):
    cfg, rep, results, _ = default_posterior_runs
    table = contraction_table(cfg, results)
    ok = table["fitted_slope"] < 0
    report(11, "contraction trend", ok,
           "median error " + ", ".join(f"{e:.3f}" for e in table["median_error"])
           + f"; fitted slope {table['fitted_slope']:.3f} (< 0), theoretical {table['theoretical_exponent']:.3f}")


COMMANDS = ["solve", "synthesize", "sample", "info", "lan", "verify-fk", "bvm", "contract", "stability"]


def _run_all(ini, out, workers):
    for cmd in COMMANDS:
        code = main([cmd, "--config", str(ini), "--out", str(out / cmd), "--workers", str(workers), "--quiet"])
        assert code == 0, f"{cmd} exited with {code}"


def _same_tree(a: Path, b: Path):
    names = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    other = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    if names != other:
        return False, len(names)
    return all(filecmp.cmp(a / n, b / n, shallow=False) for n in names), len(names)


def test_12_reproducibility(tmp_path, capsys):
    ini = write_ini(tmp_path / "small.ini", SMALL)
    runs = {}
    for label, workers in (("first", 1), ("second", 1), ("parallel", 2)):
        runs[label] = tmp_path / label
        _run_all(ini, runs[label], workers)
    capsys.readouterr()
    same, count = _same_tree(runs["first"], runs["second"])
    same_par, _ = _same_tree(runs["first"], runs["parallel"])
    rerun = tmp_path / "from_manifest"
    main(["bvm", "--config", str(runs["first"] / "bvm" / "bvm.json"), "--out", str(rerun), "--quiet"])
    same_manifest = all(filecmp.cmp(runs["first"] / "bvm" / f, rerun / f, shallow=False)
                        for f in ("bvm.csv", "bvm_summary.csv", "bvm_ks.dat", "bvm.json"))
    report(12, "reproducibility", same and same_par and same_manifest,
           f"{count} output files of {len(COMMANDS)} commands identical across two runs: {same}; "
           f"with --workers 2: {same_par}; bvm re-run from its manifest: {same_manifest}")
