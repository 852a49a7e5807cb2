# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled evaluation of truncated real Fourier series at scattered points.

Mirrors ``vortexflow._pykernels.eval_series``; see that module for the
contract. Coefficients arrive pre-weighted so the series value is the plain
sum of ``Re(c_n exp(i k0 n.x))`` over the supplied modes.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, M_PI

cnp.import_array()


def eval_series(double[:, ::1] points, long[:, ::1] modes,
                double complex[:, ::1] coeffs, double L, bint with_grad):
    cdef Py_ssize_t P = points.shape[0], d = points.shape[1]
    cdef Py_ssize_t M = modes.shape[0], c = coeffs.shape[1]
    cdef Py_ssize_t p, m, j, r, nmax = 0, idx
    cdef double k0 = 2.0 * M_PI / L
    cdef double re, im, tre, tim, cre, cim, vre, vim
    for m in range(M):
        for j in range(d):
            if modes[m, j] > nmax:
                nmax = modes[m, j]
            elif -modes[m, j] > nmax:
                nmax = -modes[m, j]
    cdef Py_ssize_t width = 2 * nmax + 1
    out = np.zeros((P, c), dtype=np.float64)
    grad = np.zeros((P if with_grad else 0, c, d), dtype=np.float64)
    tab = np.empty((d, width, 2), dtype=np.float64)
    cdef double[:, ::1] vout = out
    cdef double[:, :, ::1] vgrad = grad
    cdef double[:, :, ::1] vtab = tab
    with nogil:
        for p in range(P):
            for j in range(d):
                for idx in range(width):
                    vtab[j, idx, 0] = cos(k0 * (idx - nmax) * points[p, j])
                    vtab[j, idx, 1] = sin(k0 * (idx - nmax) * points[p, j])
            for m in range(M):
                re = 1.0
                im = 0.0
                for j in range(d):
                    idx = modes[m, j] + nmax
                    tre = re * vtab[j, idx, 0] - im * vtab[j, idx, 1]
                    tim = re * vtab[j, idx, 1] + im * vtab[j, idx, 0]
                    re = tre
                    im = tim
                for r in range(c):
                    cre = coeffs[m, r].real
                    cim = coeffs[m, r].imag
                    vre = cre * re - cim * im
                    vim = cre * im + cim * re
                    vout[p, r] += vre
                    if with_grad:
                        for j in range(d):
                            vgrad[p, r, j] -= k0 * modes[m, j] * vim
    return out, (grad if with_grad else None)
