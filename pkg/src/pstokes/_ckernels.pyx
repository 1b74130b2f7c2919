# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pointwise kernels; same contracts as ``_kernels_py``."""

import numpy as np
from libc.math cimport pow


cdef void _sq_norm(double[:, :, ::1] G, double mu, double[::1] o) noexcept nogil:
    """``o[n] = mu + |G[:, :, n]|^2`` with the node index innermost."""
    cdef Py_ssize_t d = G.shape[0], m = G.shape[2], i, j, n
    for n in range(m):
        o[n] = mu
    for i in range(d):
        for j in range(d):
            for n in range(m):
                o[n] += G[i, j, n] * G[i, j, n]


def weight(double[:, :, ::1] G, double mu, double s):
    cdef Py_ssize_t m = G.shape[2], n
    out = np.empty(m)
    cdef double[::1] o = out
    with nogil:
        _sq_norm(G, mu, o)
        for n in range(m):
            o[n] = pow(o[n], s)
    return out


def stress(double[:, :, ::1] G, double mu, double p):
    cdef Py_ssize_t d = G.shape[0], m = G.shape[2], i, j, n
    cdef double e = 0.5 * (p - 2.0)
    out = np.empty((d, d, m))
    scale = np.empty(m)
    cdef double[:, :, ::1] o = out
    cdef double[::1] w = scale
    with nogil:
        _sq_norm(G, mu, w)
        for n in range(m):
            w[n] = pow(w[n], e) if w[n] > 0 else 0.0
        for i in range(d):
            for j in range(d):
                for n in range(m):
                    o[i, j, n] = w[n] * G[i, j, n]
    return out


def contract(double[:, :, ::1] G, double[:, :, :, ::1] M):
    cdef Py_ssize_t d = G.shape[0], m = G.shape[2], i, j, h, k, n
    cvec = np.zeros((d, m))
    out_gc = np.zeros((d, m))
    out_gtc = np.zeros((d, m))
    cdef double[:, ::1] c = cvec
    cdef double[:, ::1] a = out_gc
    cdef double[:, ::1] b = out_gtc
    with nogil:
        for j in range(d):
            for h in range(d):
                for k in range(d):
                    for n in range(m):
                        c[j, n] += G[h, k, n] * M[j, h, k, n]
        for i in range(d):
            for j in range(d):
                for n in range(m):
                    a[i, n] += G[i, j, n] * c[j, n]
                    b[i, n] += G[j, i, n] * c[j, n]
    return out_gc, out_gtc


def monotonicity_terms(double[:, :, ::1] A, double[:, :, ::1] B, double mu, double p):
    cdef Py_ssize_t m = A.shape[0], d = A.shape[1], i, j, n
    cdef double a2, b2, d2, sa, sb, lhs, dij, base, e = 0.5 * (p - 2.0)
    out_l = np.empty(m)
    out_r = np.empty(m)
    cdef double[::1] L = out_l
    cdef double[::1] R = out_r
    with nogil:
        for n in range(m):
            a2 = 0.0
            b2 = 0.0
            for i in range(d):
                for j in range(d):
                    a2 = a2 + A[n, i, j] * A[n, i, j]
                    b2 = b2 + B[n, i, j] * B[n, i, j]
            sa = pow(mu + a2, e) if mu + a2 > 0 else 0.0
            sb = pow(mu + b2, e) if mu + b2 > 0 else 0.0
            lhs = 0.0
            d2 = 0.0
            for i in range(d):
                for j in range(d):
                    dij = A[n, i, j] - B[n, i, j]
                    lhs = lhs + (sa * A[n, i, j] - sb * B[n, i, j]) * dij
                    d2 = d2 + dij * dij
            base = mu + a2 + b2
            L[n] = lhs
            R[n] = (pow(base, e) if base > 0 else 0.0) * d2
    return out_l, out_r
