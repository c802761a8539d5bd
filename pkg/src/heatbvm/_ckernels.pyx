# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: dense time stepping and Feynman-Kac path integrals.

Every routine here has a twin in ``_pykernels`` with identical semantics.
"""
from libc.math cimport floor
from scipy.linalg.cython_blas cimport dgemv


def affine_recursion(const double[:, ::1] P, const double[::1] x0,
                     const double[:, ::1] B, double[:, ::1] out):
    """out[0] = x0, out[m+1] = P @ out[m] + B[m]  (B may have zero rows)."""
    cdef int n = <int> P.shape[0]
    cdef Py_ssize_t steps = out.shape[0] - 1
    cdef bint has_b = B.shape[0] > 0
    cdef Py_ssize_t m, i
    cdef int one = 1
    cdef double alpha = 1.0, beta
    cdef char trans = b'T'
    for i in range(n):
        out[0, i] = x0[i]
    # row-major P is column-major P^T, hence 'T'
    for m in range(steps):
        if has_b:
            for i in range(n):
                out[m + 1, i] = B[m, i]
            beta = 1.0
        else:
            beta = 0.0
        dgemv(&trans, &n, &n, &alpha, <double *> &P[0, 0], &n,
              <double *> &out[m, 0], &one, &beta, &out[m + 1, 0], &one)


cdef inline double _wrap(double p) nogil:
    return p - floor(p)


cdef inline double _interp1(const double[::1] table, double p) nogil:
    cdef Py_ssize_t M = table.shape[0]
    cdef double s = _wrap(p) * M
    cdef Py_ssize_t i = <Py_ssize_t> floor(s)
    cdef double a = s - i
    if i >= M:
        i = M - 1
        a = 1.0
    cdef Py_ssize_t i1 = i + 1
    if i1 == M:
        i1 = 0
    return (1.0 - a) * table[i] + a * table[i1]


def fk_paths_1d(const double[::1] table, double x0, const double[:, ::1] incr,
                double scale, double dt, double sign,
                double[::1] integral, double[::1] final_pos):
    """Trapezoidal integral of the tabulated rate along x0 + sign*scale*B."""
    cdef Py_ssize_t steps = incr.shape[0]
    cdef Py_ssize_t paths = incr.shape[1]
    cdef Py_ssize_t k, m
    cdef double start = 0.5 * _interp1(table, x0)
    cdef double fv
    # time-major sweep keeps the increments contiguous
    for k in range(paths):
        final_pos[k] = x0
        integral[k] = start
    for m in range(steps):
        for k in range(paths):
            final_pos[k] = final_pos[k] + sign * scale * incr[m, k]
            fv = _interp1(table, final_pos[k])
            if m == steps - 1:
                integral[k] = integral[k] + 0.5 * fv
            else:
                integral[k] = integral[k] + fv
    for k in range(paths):
        integral[k] = integral[k] * dt
        final_pos[k] = _wrap(final_pos[k])


cdef inline double _interp2(const double[:, ::1] table, double p, double q) nogil:
    cdef Py_ssize_t M = table.shape[0]
    cdef double s = _wrap(p) * M
    cdef double t = _wrap(q) * M
    cdef Py_ssize_t i = <Py_ssize_t> floor(s)
    cdef Py_ssize_t j = <Py_ssize_t> floor(t)
    cdef double a = s - i
    cdef double b = t - j
    if i >= M:
        i = M - 1
        a = 1.0
    if j >= M:
        j = M - 1
        b = 1.0
    cdef Py_ssize_t i1 = i + 1
    cdef Py_ssize_t j1 = j + 1
    if i1 == M:
        i1 = 0
    if j1 == M:
        j1 = 0
    return ((1.0 - a) * ((1.0 - b) * table[i, j] + b * table[i, j1])
            + a * ((1.0 - b) * table[i1, j] + b * table[i1, j1]))


def fk_paths_2d(const double[:, ::1] table, double x0, double y0,
                const double[:, :, ::1] incr, double scale, double dt, double sign,
                double[::1] integral, double[:, ::1] final_pos):
    cdef Py_ssize_t steps = incr.shape[0]
    cdef Py_ssize_t paths = incr.shape[1]
    cdef Py_ssize_t k, m
    cdef double start = 0.5 * _interp2(table, x0, y0)
    cdef double fv
    for k in range(paths):
        final_pos[k, 0] = x0
        final_pos[k, 1] = y0
        integral[k] = start
    for m in range(steps):
        for k in range(paths):
            final_pos[k, 0] = final_pos[k, 0] + sign * scale * incr[m, k, 0]
            final_pos[k, 1] = final_pos[k, 1] + sign * scale * incr[m, k, 1]
            fv = _interp2(table, final_pos[k, 0], final_pos[k, 1])
            if m == steps - 1:
                integral[k] = integral[k] + 0.5 * fv
            else:
                integral[k] = integral[k] + fv
    for k in range(paths):
        integral[k] = integral[k] * dt
        final_pos[k, 0] = _wrap(final_pos[k, 0])
        final_pos[k, 1] = _wrap(final_pos[k, 1])
