"""Command line interface: ``heatbvm <command> [--config PATH] [--seed S] [--out DIR]``.

Every command writes CSV tables and a JSON manifest holding the fully
resolved configuration and seed; feeding a manifest back through ``--config``
reproduces the outputs exactly. Timings go to stderr only, so output files
are identical between runs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import kernels
from .config import ConfigError, load_config
from .experiments import (
    DegenerateProblemError,
    NumericalFailure,
    contraction_table,
    lan_table,
    result_dicts,
    run_posterior_jobs,
    run_stability_probe,
    summarise_bvm,
    truth_info,
)
from .feynman_kac import FKEstimator, solver_value
from .observation import SpaceTimeBasis, synthesize, write_observation
from .pde import forward_residual, solution_bounds
from .rng import make_rng
from .sampler import PosteriorTarget, run_chain
from .semiparametric import least_favorable_direction

EXIT_OK, EXIT_CONFIG, EXIT_DEGENERATE, EXIT_NUMERICAL = 0, 2, 3, 4

log = logging.getLogger("heatbvm")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_dat(path: Path, header, rows):
    """Whitespace separated columns with a ``#`` header line (gnuplot)."""
    with open(path, "w") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for r in rows:
            fh.write(" ".join(_fmt(v) for v in r) + "\n")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_manifest(out: Path, name: str, cfg, command: str, payload: dict):
    manifest = {"command": command, "seed": cfg.seed, "config": cfg.to_dict(), **payload}
    with open(out / name, "w") as fh:
        json.dump(_clean(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _basis(cfg):
    return SpaceTimeBasis(cfg.grid, cfg.time, cfg.j_space, cfg.j_time)


def cmd_solve(cfg, out, args):
    spec = cfg.truth()
    u = spec.solution.values
    coords = [c.ravel() for c in cfg.grid.coordinates()]
    names = ["t"] + ["x", "y"][: cfg.grid.dim] + ["u"]
    rows = []
    for m, t in enumerate(cfg.time.times):
        flat = u[m].ravel()
        for j in range(cfg.grid.size):
            rows.append([t] + [c[j] for c in coords] + [flat[j]])
    write_csv(out / "solution.csv", names, rows)
    write_manifest(out, "solve.json", cfg, "solve", {
        "grid": {"dim": cfg.grid.dim, "nx": cfg.grid.points_per_dim, "nt": cfg.time.steps,
                 "horizon": cfg.time.horizon},
        "relative_residual": forward_residual(spec),
        "bounds": solution_bounds(spec),
        "backend": kernels.BACKEND,
    })
    return EXIT_OK


def cmd_synthesize(cfg, out, args):
    obs = synthesize(cfg.truth(), cfg.obs_n, seed=cfg.seed, basis=_basis(cfg))
    write_observation(obs, out, {"command": "synthesize", "config": cfg.to_dict()})
    return EXIT_OK


def cmd_sample(cfg, out, args):
    spec = cfg.truth()
    obs = synthesize(spec, cfg.obs_n, seed=cfg.seed, basis=_basis(cfg))
    target = PosteriorTarget(obs, cfg.prior, spec.u0, spec.link, truth_coeffs=spec.F.coeffs)
    store = run_chain(target, cfg.sampler, stream=("sample",), truth=(spec.theta, spec.F))
    for c, ch in enumerate(store.chains):
        k = ch.coeffs.shape[1]
        header = ["iteration", "theta"] + [f"F_coeff_{i}" for i in range(k)] + ["loglik"]
        rows = [[ch.iteration[i], ch.theta[i], *ch.coeffs[i], ch.loglik[i]] for i in range(len(ch.theta))]
        write_csv(out / f"chain_{c}.csv", header, rows)
    th = store.theta
    write_manifest(out, "sample.json", cfg, "sample", {
        "n": cfg.obs_n,
        "theta_mean": float(th.mean()),
        "theta_sd": float(th.std(ddof=1)),
        "diagnostics": store.diagnostics(),
    })
    return EXIT_OK


def cmd_info(cfg, out, args):
    spec = cfg.truth()
    rep = least_favorable_direction(spec, cfg.info.cg_tol, cfg.info.max_iters, cfg.info.precondition,
                                     ident_tol=cfg.info.identifiability_tol)
    d = rep.to_dict()
    print(json.dumps(_clean(d), indent=2, sort_keys=True))
    write_manifest(out, "info.json", cfg, "info", {"info": d})
    if rep.identifiable.degenerate:
        return EXIT_DEGENERATE
    return EXIT_OK if rep.converged else EXIT_NUMERICAL


def cmd_lan(cfg, out, args):
    rows, summary = lan_table(cfg)
    write_csv(out / "lan.csv", ["n", "remainder"], [[r["n"], r["remainder"]] for r in rows])
    write_dat(out / "lan.dat", ["n", "remainder"], [[r["n"], r["remainder"]] for r in rows])
    write_manifest(out, "lan.json", cfg, "lan", {"lan": summary})
    return EXIT_OK


def cmd_verify_fk(cfg, out, args):
    spec = cfg.truth()
    est = FKEstimator(spec)
    place = make_rng(cfg.seed, "fk-probes")
    rows = []
    for i in range(cfg.fk.probes):
        x = place.random(cfg.grid.dim)
        m = int(place.integers(1, cfg.time.steps + 1))
        t = m * cfg.time.dt
        mean, se = est.estimate(x, t, cfg.fk.n_paths, make_rng(cfg.seed, "fk", i), cfg.fk.steps, cfg.fk.antithetic)
        sv = solver_value(spec, x, t)
        z = (mean - sv) / se if se > 0 else float("nan")
        rows.append([*x, t, sv, mean, se, z])
    header = ["x", "y"][: cfg.grid.dim] + ["t", "solver", "fk_mean", "stderr", "z"]
    write_csv(out / "fk.csv", header, rows)
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    sys.stdout.write(buf.getvalue())
    worst = max(abs(r[-3] - r[-4]) - 3 * r[-2] for r in rows)
    write_manifest(out, "fk.json", cfg, "verify-fk", {"max_excess_over_3se": worst,
                                                      "n_paths": cfg.fk.n_paths})
    return EXIT_OK


def _bvm_outputs(cfg, out, results, report):
    summary = summarise_bvm(results, report.eff_info)
    rows = result_dicts(results)
    header = list(rows[0].keys())
    write_csv(out / "bvm.csv", header, [[r[h] for h in header] for r in rows])
    sh = list(summary[0].keys())
    write_csv(out / "bvm_summary.csv", sh, [[s[h] for h in sh] for s in summary])
    write_dat(out / "bvm_ks.dat", ["n", "median_ks", "median_tv", "coverage"],
              [[s["n"], s["median_ks"], s["median_tv"], s["coverage"]] for s in summary])
    return summary


def cmd_bvm(cfg, out, args):
    report = truth_info(cfg)
    results = run_posterior_jobs(cfg, args.workers, report)
    summary = _bvm_outputs(cfg, out, results, report)
    write_manifest(out, "bvm.json", cfg, "bvm", {"info": report.to_dict(), "summary": summary})
    return EXIT_OK


def cmd_contract(cfg, out, args):
    results = run_posterior_jobs(cfg, args.workers)
    table = contraction_table(cfg, results)
    rows = list(zip(table["n"], table["median_error"], table["delta_n"]))
    write_csv(out / "contraction.csv", ["n", "median_error", "delta_n"], rows)
    write_dat(out / "contraction.dat", ["n", "median_error", "delta_n"], rows)
    write_manifest(out, "contraction.json", cfg, "contract", {"contraction": table})
    return EXIT_OK


def cmd_stability(cfg, out, args):
    rows, summary = run_stability_probe(cfg)
    header = list(rows[0].keys())
    write_csv(out / "stability.csv", header, [[r[h] for h in header] for r in rows])
    write_manifest(out, "stability.json", cfg, "stability", {"stability": summary})
    return EXIT_OK


COMMANDS = {
    "solve": (cmd_solve, "solve the forward problem at the configured truth"),
    "synthesize": (cmd_synthesize, "draw a white-noise observation"),
    "sample": (cmd_sample, "run the posterior sampler on one synthetic data set"),
    "info": (cmd_info, "least favourable direction and efficient information (JSON on stdout)"),
    "lan": (cmd_lan, "LAN remainder against n"),
    "verify-fk": (cmd_verify_fk, "compare the solver with Feynman-Kac Monte Carlo"),
    "bvm": (cmd_bvm, "Bernstein-von Mises diagnostics over n and replicates"),
    "contract": (cmd_contract, "posterior contraction rate study"),
    "stability": (cmd_stability, "stability and Lipschitz ratio probes"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heatbvm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="INI file or a JSON manifest from an earlier run")
        sp.add_argument("--seed", type=int, help="overrides [experiment] seed")
        sp.add_argument("--out", help="output directory (default [experiment] output_dir)")
        sp.add_argument("--workers", type=int, default=1, help="worker processes for experiments")
        sp.add_argument("--quiet", action="store_true", help="no progress messages on stderr")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="heatbvm: %(message)s", stream=sys.stderr)
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        out = Path(args.out if args.out else cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        func = COMMANDS[args.command][0]
        t0 = time.perf_counter()
        code = func(cfg, out, args)
        log.info("%s finished in %.2f s (kernels: %s), outputs in %s",
                 args.command, time.perf_counter() - t0, kernels.BACKEND, out)
        return code
    except ConfigError as exc:
        print(f"heatbvm: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateProblemError as exc:
        print(f"heatbvm: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (NumericalFailure, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"heatbvm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
