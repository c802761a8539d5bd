"""Backend selection for the hot loops.

The compiled extension ``heatbvm._ckernels`` is used when it imports; otherwise,
or when ``HEATBVM_PURE_PYTHON`` is set to a non-empty value other than ``0``,
the numpy versions in ``heatbvm._pykernels`` are used. Both expose the same
functions with the same argument conventions (output arrays are filled in place).
"""

import os

import numpy as np

from . import _pykernels

_force_python = os.environ.get("HEATBVM_PURE_PYTHON", "") not in ("", "0")

try:
    if _force_python:
        raise ImportError("pure-python backend requested")
    from . import _ckernels as _backend
    BACKEND = "cython"
except ImportError:
    _backend = _pykernels
    BACKEND = "python"

_EMPTY = np.empty((0, 0))


def get_backend(name=None):
    """Return the kernel module for ``name`` ('cython', 'python' or None=active)."""
    if name is None:
        return _backend
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def affine_recursion(P, x0, B=None, backend=None):
    """Iterate ``x[m+1] = P @ x[m] + B[m]`` and return all iterates.

    Parameters
    ----------
    P : (n, n) array
    x0 : (n,) array
    B : (steps, n) array or None
        Source increments. With ``None`` the number of steps must be given by
        passing ``B=int``.
    """
    mod = get_backend(backend)
    P = np.ascontiguousarray(P, dtype=float)
    x0 = np.ascontiguousarray(x0, dtype=float)
    if isinstance(B, (int, np.integer)):
        steps = int(B)
        B = _EMPTY
    else:
        B = np.ascontiguousarray(B, dtype=float)
        steps = B.shape[0]
    out = np.empty((steps + 1, P.shape[0]))
    mod.affine_recursion(P, x0, B, out)
    return out


def fk_paths(table, start, incr, scale, dt, sign, backend=None):
    """Path integrals of a tabulated periodic rate along scaled Brownian paths.

    Returns ``(integral, final_position)`` for each path.
    """
    mod = get_backend(backend)
    table = np.ascontiguousarray(table, dtype=float)
    incr = np.ascontiguousarray(incr, dtype=float)
    paths = incr.shape[1]
    integral = np.empty(paths)
    if table.ndim == 1:
        final = np.empty(paths)
        mod.fk_paths_1d(table, float(start[0]), incr, float(scale), float(dt),
                        float(sign), integral, final)
    else:
        final = np.empty((paths, 2))
        mod.fk_paths_2d(table, float(start[0]), float(start[1]), incr, float(scale),
                        float(dt), float(sign), integral, final)
    return integral, final
