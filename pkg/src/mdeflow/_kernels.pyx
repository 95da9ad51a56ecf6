# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled counterparts of ``mdeflow._pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, pow, exp, log, sqrt, INFINITY

cnp.import_array()

cdef double SNAP = 1e-13


def wasserstein_1d_pow(const double[::1] x, const double[::1] cwx,
                       const double[::1] y, const double[::1] cwy, double p):
    cdef Py_ssize_t i = 0, j = 0
    cdef Py_ssize_t nx = x.shape[0], ny = y.shape[0]
    cdef double u = 0.0, nxt, d, total = 0.0
    with nogil:
        while i < nx and j < ny:
            if fabs(cwx[i] - cwy[j]) <= SNAP:
                # coincident breakpoints up to rounding: advance both
                nxt = cwx[i] if cwx[i] > cwy[j] else cwy[j]
                d = nxt - u
                if d > 0.0:
                    total += d * pow(fabs(x[i] - y[j]), p)
                    u = nxt
                i += 1
                j += 1
                continue
            if cwx[i] < cwy[j]:
                nxt = cwx[i]
            else:
                nxt = cwy[j]
            d = nxt - u
            if d > 0.0:
                total += d * pow(fabs(x[i] - y[j]), p)
                u = nxt
            if cwx[i] <= nxt:
                i += 1
            if cwy[j] <= nxt:
                j += 1
    return total


def systematic_indices(const double[::1] cw, Py_ssize_t n_out, double u):
    cdef cnp.ndarray[cnp.intp_t, ndim=1] out = np.empty(n_out, dtype=np.intp)
    cdef cnp.intp_t[::1] ov = out
    cdef Py_ssize_t k, i = 0, n = cw.shape[0]
    cdef double pos
    with nogil:
        for k in range(n_out):
            pos = (k + u) / n_out
            while i < n - 1 and cw[i] <= pos:
                i += 1
            ov[k] = i
    return out


def cost_matrix(const double[:, ::1] x, const double[:, ::1] y, double p):
    cdef Py_ssize_t n = x.shape[0], m = y.shape[0], d = x.shape[1]
    cdef cnp.ndarray[double, ndim=2] C = np.empty((n, m))
    cdef double[:, ::1] cv = C
    cdef Py_ssize_t i, j, k
    cdef double s, t
    with nogil:
        for i in range(n):
            for j in range(m):
                s = 0.0
                for k in range(d):
                    t = x[i, k] - y[j, k]
                    s += t * t
                if p == 2.0:
                    cv[i, j] = s
                else:
                    cv[i, j] = pow(sqrt(s), p)
    return C


def softmin_rows(const double[:, ::1] C, const double[::1] g,
                 const double[::1] logb, double eps):
    cdef Py_ssize_t n = C.shape[0], m = C.shape[1]
    cdef cnp.ndarray[double, ndim=1] f = np.empty(n)
    cdef double[::1] fv = f
    cdef Py_ssize_t i, j
    cdef double mx, v, acc
    with nogil:
        for i in range(n):
            mx = -INFINITY
            for j in range(m):
                v = (g[j] - C[i, j]) / eps + logb[j]
                if v > mx:
                    mx = v
            acc = 0.0
            for j in range(m):
                acc += exp((g[j] - C[i, j]) / eps + logb[j] - mx)
            fv[i] = -eps * (mx + log(acc))
    return f
