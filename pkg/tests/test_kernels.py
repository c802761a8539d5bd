import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatbvm import kernels

try:
    kernels.get_backend("cython")
    HAVE_EXT = True
except ImportError:
    HAVE_EXT = False

needs_ext = pytest.mark.skipif(not HAVE_EXT, reason="compiled extension not built")


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


@needs_ext
@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 40), st.integers(1, 50), st.booleans())
def test_affine_recursion_backends_agree(seed, n, steps, with_source):
    rng = np.random.default_rng(seed)
    P = rng.standard_normal((n, n)) / np.sqrt(n)
    x0 = rng.standard_normal(n)
    B = rng.standard_normal((steps, n)) if with_source else steps
    a = kernels.affine_recursion(P, x0, B, backend="cython")
    b = kernels.affine_recursion(P, x0, B, backend="python")
    assert a.shape == (steps + 1, n)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12 * np.abs(b).max())


def test_affine_recursion_matches_loop():
    rng = np.random.default_rng(3)
    P = rng.standard_normal((5, 5)) * 0.3
    x0 = rng.standard_normal(5)
    B = rng.standard_normal((7, 5))
    out = kernels.affine_recursion(P, x0, B)
    x = x0.copy()
    for m in range(7):
        x = P @ x + B[m]
        assert np.allclose(out[m + 1], x, atol=1e-13)


@needs_ext
@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 64), st.integers(1, 300), st.sampled_from([1.0, -1.0]))
def test_fk_paths_1d_backends_agree(seed, steps, paths, sign):
    rng = np.random.default_rng(seed)
    table = 1 + rng.random(64)
    incr = rng.standard_normal((steps, paths))
    start = [rng.random()]
    a = kernels.fk_paths(table, start, incr, 0.1, 0.01, sign, backend="cython")
    b = kernels.fk_paths(table, start, incr, 0.1, 0.01, sign, backend="python")
    for u, v in zip(a, b):
        assert np.allclose(u, v, rtol=1e-12, atol=1e-14)


@needs_ext
@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 32), st.integers(1, 100))
def test_fk_paths_2d_backends_agree(seed, steps, paths):
    rng = np.random.default_rng(seed)
    table = 1 + rng.random((16, 16))
    incr = rng.standard_normal((steps, paths, 2))
    start = rng.random(2)
    a = kernels.fk_paths(table, start, incr, 0.2, 0.01, -1.0, backend="cython")
    b = kernels.fk_paths(table, start, incr, 0.2, 0.01, -1.0, backend="python")
    for u, v in zip(a, b):
        assert np.allclose(u, v, rtol=1e-12, atol=1e-14)


def test_fk_paths_constant_rate_and_wrapping():
    table = np.full(32, 2.0)
    incr = np.ones((10, 3))
    integral, final = kernels.fk_paths(table, [0.9], incr, 0.05, 0.1, 1.0)
    assert np.allclose(integral, 2.0)
    assert np.allclose(final, 0.4)
    assert np.all((final >= 0) & (final < 1))


def test_pure_python_fallback_is_selected_by_environment():
    env = dict(os.environ, HEATBVM_PURE_PYTHON="1")
    code = ("from heatbvm import kernels; from conftest import default_truth; "
            "print(kernels.BACKEND, repr(float(default_truth(16, 64).solution.values.sum())))")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         cwd=os.path.dirname(__file__), check=True).stdout.split()
    assert out[0] == "python"
    from conftest import default_truth
    assert float(out[1]) == pytest.approx(float(default_truth(16, 64).solution.values.sum()), rel=1e-12)
