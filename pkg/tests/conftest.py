import os

import numpy as np
import pytest

from heatbvm.pde import ProblemSpec
from heatbvm.prior import LinkFunction
from heatbvm.spectral import TimeGrid, TorusField, TorusGrid

TWO_PI = 2.0 * np.pi

# lines collected by tests/test_acceptance.py, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_collection_modifyitems(config, items):
    if os.environ.get("HEATBVM_EXTENDED", "") not in ("", "0"):
        return
    skip = pytest.mark.skip(reason="extended experiment; set HEATBVM_EXTENDED=1 to run")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def constant_F_for(c, f_min=0.5):
    """Latent value F with Phi(F) = c."""
    return float(np.log(np.expm1(c - f_min)))


def make_spec(theta=1.0, F=None, u0=None, nx=64, nt=256, horizon=1.0, dim=1, f_min=0.5):
    grid = TorusGrid(dim, nx)
    time = TimeGrid(horizon, nt)
    if F is None:
        F = TorusField.constant(grid, 0.0)
    elif callable(F):
        F = TorusField.from_function(grid, F)
    elif np.isscalar(F):
        F = TorusField.constant(grid, F)
    if u0 is None:
        u0 = TorusField.from_function(grid, lambda *x: 2.0 + np.cos(TWO_PI * x[0]))
    elif callable(u0):
        u0 = TorusField.from_function(grid, u0)
    elif np.isscalar(u0):
        u0 = TorusField.constant(grid, u0)
    return ProblemSpec(theta, F, u0, time, LinkFunction(f_min))


def default_truth(nx=64, nt=256):
    return make_spec(
        theta=2.0,
        F=lambda x: 0.5 * np.cos(TWO_PI * x) + 0.3 * np.sin(2 * TWO_PI * x),
        u0=lambda x: 2.0 + np.cos(TWO_PI * x),
        nx=nx,
        nt=nt,
    )


def random_spec(rng, nx=32, nt=128, dim=1):
    """Smooth random (theta, F, u0) with u0 bounded below by 0.5."""
    grid = TorusGrid(dim, nx)
    theta = float(rng.uniform(0.5, 4.0))
    k = min(6, grid.size)
    cF = np.zeros(grid.size)
    cF[:k] = rng.normal(0, 0.5, k)
    cu = np.zeros(grid.size)
    cu[1:k] = rng.normal(0, 0.2, k - 1)
    u0 = TorusField.from_coeffs(grid, cu)
    u0 = u0 + (1.0 + max(0.0, -float(u0.values.min())))
    return ProblemSpec(theta, TorusField.from_coeffs(grid, cF), u0, TimeGrid(1.0, nt))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def truth():
    return default_truth()


# a configuration small enough for end-to-end runs inside the test suite
SMALL = {
    "grid": {"nx": "16", "nt": "64"},
    "sampler": {"burn_in": "200", "n_samples": "600", "thin": "3"},
    "experiment": {"n_grid": "100, 1000", "replicates": "2", "seed": "3"},
    "fk": {"n_paths": "2000", "steps": "64", "probes": "3"},
    "stability": {"scales": "0.1, 0.01, 0.001", "directions": "2"},
}


def write_ini(path, sections):
    lines = []
    for sec, body in sections.items():
        lines.append(f"[{sec}]")
        lines.extend(f"{k} = {v}" for k, v in body.items())
    path.write_text("\n".join(lines) + "\n")
    return path
