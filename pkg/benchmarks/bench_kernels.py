"""Compare the compiled and the numpy kernels on the hot loops.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Reports the best wall time per call for the dense time-stepping recursion at
several grid sizes and for a batch of Feynman-Kac path integrals, together
with the largest difference between the two backends' outputs.
"""

import argparse
import time

import numpy as np

from heatbvm import kernels
from heatbvm.pde import Propagator
from heatbvm.spectral import TimeGrid, TorusGrid


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_recursion(nx, nt, repeat):
    grid = TorusGrid(1, nx)
    tg = TimeGrid(1.0, nt)
    x = grid.coordinates()[0]
    prop = Propagator(grid, tg, 2.0, 1.0 + 0.5 * np.cos(2 * np.pi * x))
    x0 = 2.0 + np.cos(2 * np.pi * x)
    res = {}
    for name in ("cython", "python"):
        res[name] = best_time(lambda: kernels.affine_recursion(prop.P, x0, nt, backend=name), repeat)
    return res


def bench_fk(paths, steps, repeat):
    rng = np.random.default_rng(0)
    table = 1.0 + 0.5 * np.cos(2 * np.pi * np.arange(1024) / 1024)
    incr = rng.standard_normal((steps, paths))
    dt = 0.5 / steps
    res = {}
    for name in ("cython", "python"):
        res[name] = best_time(
            lambda: kernels.fk_paths(table, [0.3], incr, np.sqrt(dt), dt, 1.0, backend=name), repeat)
    return res


def report(label, res, diff):
    tc, tp = res["cython"][0], res["python"][0]
    print(f"{label:<34s} cython {tc * 1e3:9.3f} ms   python {tp * 1e3:9.3f} ms   "
          f"speed-up {tp / tc:6.1f}x   max |diff| {diff:.1e}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    try:
        kernels.get_backend("cython")
    except ImportError:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    print(f"active backend: {kernels.BACKEND}")
    for nx, nt in ((16, 256), (64, 256), (64, 4096), (256, 256)):
        r = bench_recursion(nx, nt, args.repeat)
        diff = np.abs(r["cython"][1] - r["python"][1]).max()
        report(f"time stepping Nx={nx} Nt={nt}", r, diff)
    for paths in (8192, 65536):
        r = bench_fk(paths, 512, max(1, args.repeat // 2))
        diff = max(np.abs(a - b).max() for a, b in zip(r["cython"][1], r["python"][1]))
        report(f"FK paths {paths} x 512 steps", r, diff)


if __name__ == "__main__":
    main()
