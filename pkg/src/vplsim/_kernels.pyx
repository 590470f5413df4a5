# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Fused pointwise loop for second-order velocity operators."""
import numpy as np
cimport cython

ctypedef fused scalar:
    double
    double complex


def second_order(const scalar[:, ::1] a, const double[::1] v1, const double[::1] v2, const double[::1] v3,
                 const scalar[::1] g, const scalar[:, ::1] dg, const scalar[:, ::1] hg,
                 const scalar[::1] zeroth, double s):
    """a^{ij} g_ij - 2 v_i a^{ij} g_j + (zeroth + s (v_i v_j a^{ij} - a^{ii})) g.

    ``a`` and ``hg`` hold the six symmetric components (00, 01, 02, 11, 12, 22).
    """
    cdef Py_ssize_t n1 = v1.shape[0], n2 = v2.shape[0], n3 = v3.shape[0]
    cdef Py_ssize_t i1, i2, i3, p = 0
    dtype = np.complex128 if scalar is cython.doublecomplex else np.float64
    out = np.empty(n1 * n2 * n3, dtype=dtype)
    cdef scalar[::1] o = out
    cdef double x, y, z
    cdef scalar a00, a01, a02, a11, a12, a22, b0, b1, b2, acc, zz
    for i1 in range(n1):
        x = v1[i1]
        for i2 in range(n2):
            y = v2[i2]
            for i3 in range(n3):
                z = v3[i3]
                a00 = a[0, p]; a01 = a[1, p]; a02 = a[2, p]
                a11 = a[3, p]; a12 = a[4, p]; a22 = a[5, p]
                b0 = x * a00 + y * a01 + z * a02
                b1 = x * a01 + y * a11 + z * a12
                b2 = x * a02 + y * a12 + z * a22
                acc = (a00 * hg[0, p] + a11 * hg[3, p] + a22 * hg[5, p]
                       + 2.0 * (a01 * hg[1, p] + a02 * hg[2, p] + a12 * hg[4, p]))
                acc = acc - 2.0 * (b0 * dg[0, p] + b1 * dg[1, p] + b2 * dg[2, p])
                zz = zeroth[p] + s * (x * b0 + y * b1 + z * b2 - a00 - a11 - a22)
                o[p] = acc + zz * g[p]
                p += 1
    return out
