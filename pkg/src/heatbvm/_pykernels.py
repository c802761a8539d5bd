"""Pure numpy versions of the routines in ``_ckernels``."""

import numpy as np


def affine_recursion(P, x0, B, out):
    out[0] = x0
    has_b = B.shape[0] > 0
    for m in range(out.shape[0] - 1):
        nxt = P @ out[m]
        if has_b:
            nxt += B[m]
        out[m + 1] = nxt


def _interp1(table, p):
    M = table.shape[0]
    s = (p - np.floor(p)) * M
    i = np.floor(s).astype(np.intp)
    a = s - i
    over = i >= M
    i[over] = M - 1
    a[over] = 1.0
    return (1.0 - a) * table[i] + a * table[(i + 1) % M]


def fk_paths_1d(table, x0, incr, scale, dt, sign, integral, final_pos):
    steps, paths = incr.shape
    p = np.full(paths, float(x0))
    acc = 0.5 * _interp1(table, p)
    for m in range(steps):
        p = p + sign * scale * incr[m]
        fv = _interp1(table, p)
        acc += 0.5 * fv if m == steps - 1 else fv
    integral[:] = acc * dt
    final_pos[:] = p - np.floor(p)


def _interp2(table, p, q):
    M = table.shape[0]
    s = (p - np.floor(p)) * M
    t = (q - np.floor(q)) * M
    i = np.floor(s).astype(np.intp)
    j = np.floor(t).astype(np.intp)
    a = s - i
    b = t - j
    over = i >= M
    i[over] = M - 1
    a[over] = 1.0
    over = j >= M
    j[over] = M - 1
    b[over] = 1.0
    i1 = (i + 1) % M
    j1 = (j + 1) % M
    return ((1.0 - a) * ((1.0 - b) * table[i, j] + b * table[i, j1])
            + a * ((1.0 - b) * table[i1, j] + b * table[i1, j1]))


def fk_paths_2d(table, x0, y0, incr, scale, dt, sign, integral, final_pos):
    steps, paths, _ = incr.shape
    p = np.full(paths, float(x0))
    q = np.full(paths, float(y0))
    acc = 0.5 * _interp2(table, p, q)
    for m in range(steps):
        p = p + sign * scale * incr[m, :, 0]
        q = q + sign * scale * incr[m, :, 1]
        fv = _interp2(table, p, q)
        acc += 0.5 * fv if m == steps - 1 else fv
    integral[:] = acc * dt
    final_pos[:, 0] = p - np.floor(p)
    final_pos[:, 1] = q - np.floor(q)
