# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled trigonometric evaluation kernels.

Each routine computes, for every point x and component c,

    out[c, m] = Re  sum_k  coef[c, k] * exp(i * k . x_m)

where the wavenumber set is the tensor product of the per-axis arrays.  The
coefficients are expected to carry any normalization (1/N^d etc.) already.
Phases are shared across components, so multi-component blocks (velocity plus
its Jacobian, say) should be evaluated in a single call.
"""

import numpy as np

from libc.math cimport cos, sin


def eval2(double complex[:, :, ::1] coef,
          double[::1] k1, double[::1] k2,
          double[:, ::1] pts, double[:, ::1] out):
    cdef Py_ssize_t ncomp = coef.shape[0]
    cdef Py_ssize_t n1 = coef.shape[1]
    cdef Py_ssize_t n2 = coef.shape[2]
    cdef Py_ssize_t npts = pts.shape[0]
    cdef Py_ssize_t m, c, a, b
    cdef double x1, x2
    cdef double complex acc, row
    ph1_arr = np.empty(n1, dtype=np.complex128)
    ph2_arr = np.empty(n2, dtype=np.complex128)
    cdef double complex[::1] ph1 = ph1_arr
    cdef double complex[::1] ph2 = ph2_arr

    with nogil:
        for m in range(npts):
            x1 = pts[m, 0]
            x2 = pts[m, 1]
            for a in range(n1):
                ph1[a] = cos(k1[a] * x1) + 1j * sin(k1[a] * x1)
            for b in range(n2):
                ph2[b] = cos(k2[b] * x2) + 1j * sin(k2[b] * x2)
            for c in range(ncomp):
                acc = 0
                for a in range(n1):
                    row = 0
                    for b in range(n2):
                        row = row + coef[c, a, b] * ph2[b]
                    acc = acc + row * ph1[a]
                out[c, m] = acc.real


def eval3(double complex[:, :, :, ::1] coef,
          double[::1] k1, double[::1] k2, double[::1] k3,
          double[:, ::1] pts, double[:, ::1] out):
    cdef Py_ssize_t ncomp = coef.shape[0]
    cdef Py_ssize_t n1 = coef.shape[1]
    cdef Py_ssize_t n2 = coef.shape[2]
    cdef Py_ssize_t n3 = coef.shape[3]
    cdef Py_ssize_t npts = pts.shape[0]
    cdef Py_ssize_t m, c, a, b, g
    cdef double x1, x2, x3
    cdef double complex acc, plane, row
    ph1_arr = np.empty(n1, dtype=np.complex128)
    ph2_arr = np.empty(n2, dtype=np.complex128)
    ph3_arr = np.empty(n3, dtype=np.complex128)
    cdef double complex[::1] ph1 = ph1_arr
    cdef double complex[::1] ph2 = ph2_arr
    cdef double complex[::1] ph3 = ph3_arr

    with nogil:
        for m in range(npts):
            x1 = pts[m, 0]
            x2 = pts[m, 1]
            x3 = pts[m, 2]
            for a in range(n1):
                ph1[a] = cos(k1[a] * x1) + 1j * sin(k1[a] * x1)
            for b in range(n2):
                ph2[b] = cos(k2[b] * x2) + 1j * sin(k2[b] * x2)
            for g in range(n3):
                ph3[g] = cos(k3[g] * x3) + 1j * sin(k3[g] * x3)
            for c in range(ncomp):
                acc = 0
                for a in range(n1):
                    plane = 0
                    for b in range(n2):
                        row = 0
                        for g in range(n3):
                            row = row + coef[c, a, b, g] * ph3[g]
                        plane = plane + row * ph2[b]
                    acc = acc + plane * ph1[a]
                out[c, m] = acc.real
