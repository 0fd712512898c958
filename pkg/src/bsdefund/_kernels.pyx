# cython: language_level=3
"""Compiled inner loops: batched cyclic Jacobi and the funding driver."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()


cdef void _jacobi_one(double[:, ::1] a, double[:, ::1] v, double[::1] w,
                      int max_sweeps, double rel_tol) noexcept nogil:
    cdef Py_ssize_t d = a.shape[0]
    cdef Py_ssize_t i, j, k, p, q
    cdef double off, total, theta, t, c, s, apq, akp, akq, tmp
    cdef int sweep

    for i in range(d):
        for j in range(d):
            v[i, j] = 0.0
        v[i, i] = 1.0

    for sweep in range(max_sweeps):
        off = 0.0
        total = 0.0
        for i in range(d):
            for j in range(d):
                tmp = a[i, j] * a[i, j]
                total += tmp
                if i != j:
                    off += tmp
        if off <= rel_tol * rel_tol * total or off == 0.0:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for k in range(d):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(d):
                    akp = a[p, k]
                    akq = a[q, k]
                    a[p, k] = c * akp - s * akq
                    a[q, k] = s * akp + c * akq
                for k in range(d):
                    akp = v[k, p]
                    akq = v[k, q]
                    v[k, p] = c * akp - s * akq
                    v[k, q] = s * akp + c * akq

    for i in range(d):
        w[i] = a[i, i]

    # insertion sort, descending, permuting eigenvector columns alongside
    for i in range(1, d):
        j = i
        while j > 0 and w[j - 1] < w[j]:
            tmp = w[j - 1]
            w[j - 1] = w[j]
            w[j] = tmp
            for k in range(d):
                tmp = v[k, j - 1]
                v[k, j - 1] = v[k, j]
                v[k, j] = tmp
            j -= 1

    for j in range(d):
        for k in range(d):
            if fabs(v[k, j]) > 1e-12:
                if v[k, j] < 0.0:
                    for i in range(d):
                        v[i, j] = -v[i, j]
                break


def jacobi_eigh(a_in, int max_sweeps=60, double rel_tol=1e-17):
    """Eigen-decompose a stack of symmetric matrices, shape (n, d, d)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=3] a = np.array(a_in, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t d = a.shape[1]
    w_arr = np.empty((n, d), dtype=np.float64)
    v_arr = np.empty((n, d, d), dtype=np.float64)
    cdef double[:, :, ::1] av = a
    cdef double[:, ::1] wv = w_arr
    cdef double[:, :, ::1] vv = v_arr
    cdef Py_ssize_t m
    with nogil:
        for m in range(n):
            _jacobi_one(av[m], vv[m], wv[m], max_sweeps, rel_tol)
    return w_arr, v_arr


def funding_fl(y_in, w_in, double r_l, double r_b, r_ib_in):
    """Funding driver f_l for a batch; ``w`` holds the products z^i S^i."""
    cdef const double[::1] y = np.ascontiguousarray(y_in, dtype=np.float64)
    cdef const double[:, ::1] w = np.ascontiguousarray(w_in, dtype=np.float64)
    cdef const double[::1] r_ib = np.ascontiguousarray(r_ib_in, dtype=np.float64)
    cdef Py_ssize_t n = w.shape[0]
    cdef Py_ssize_t d = w.shape[1]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t m, i
    cdef double lin, fund, neg, x, u
    with nogil:
        for m in range(n):
            lin = 0.0
            fund = 0.0
            neg = 0.0
            for i in range(d):
                x = w[m, i]
                lin += x
                if x > 0.0:
                    fund += r_ib[i] * x
                else:
                    neg -= x
            u = y[m] + neg
            if u > 0.0:
                out[m] = r_l * lin - fund + r_l * u
            else:
                out[m] = r_l * lin - fund + r_b * u
    return out_arr
