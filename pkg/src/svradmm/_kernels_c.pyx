# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled gradient kernels.

Same contracts as ``_kernels_py``; see that module for the loss
definitions.  Row loops are written out so mini-batch gradients avoid the
fancy-indexing copies the numpy fallback pays for.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log1p

cnp.import_array()

cdef enum:
    K_LOGISTIC = 0
    K_SQUARED = 1
    K_SIGMOID = 2

LOGISTIC = K_LOGISTIC
SQUARED = K_SQUARED
SIGMOID = K_SIGMOID

BACKEND = "c"


cdef inline double _expit(double s) noexcept nogil:
    if s >= 0.0:
        return 1.0 / (1.0 + exp(-s))
    cdef double e = exp(s)
    return e / (1.0 + e)


cdef inline double _coeff(int kind, double t, double o) noexcept nogil:
    cdef double s
    if kind == K_SQUARED:
        return t - o
    if kind == K_LOGISTIC:
        return -o * _expit(-o * t)
    s = _expit(o * t)
    return -o * s * (1.0 - s)


cdef inline double _value(int kind, double t, double o) noexcept nogil:
    cdef double s
    if kind == K_SQUARED:
        return 0.5 * (o - t) * (o - t)
    if kind == K_LOGISTIC:
        s = -o * t
        if s > 0.0:
            return s + log1p(exp(-s))
        return log1p(exp(s))
    return _expit(-o * t)


def full_gradient(double[:, ::1] Z, double[::1] o, int kind, double mu,
                  double[::1] x):
    cdef Py_ssize_t n = Z.shape[0], d = Z.shape[1]
    cdef Py_ssize_t i, j
    cdef double t, c
    out_arr = np.zeros(d)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            t = 0.0
            for j in range(d):
                t += Z[i, j] * x[j]
            c = _coeff(kind, t, o[i])
            for j in range(d):
                out[j] += c * Z[i, j]
        for j in range(d):
            out[j] = out[j] / n + mu * x[j]
    return out_arr


def batch_gradient(double[:, ::1] Z, double[::1] o, int kind, double mu,
                   double[::1] x, idx):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ix = np.ascontiguousarray(idx, dtype=np.int64)
    cdef long[::1] iv = ix
    cdef Py_ssize_t b = iv.shape[0], d = Z.shape[1]
    cdef Py_ssize_t k, j
    cdef long i
    cdef double t, c
    out_arr = np.zeros(d)
    cdef double[::1] out = out_arr
    with nogil:
        for k in range(b):
            i = iv[k]
            t = 0.0
            for j in range(d):
                t += Z[i, j] * x[j]
            c = _coeff(kind, t, o[i])
            for j in range(d):
                out[j] += c * Z[i, j]
        for j in range(d):
            out[j] = out[j] / b + mu * x[j]
    return out_arr


def vr_gradient(double[:, ::1] Z, double[::1] o, int kind, double mu,
                double[::1] x, double[::1] x_snap, double[::1] z_snap, idx):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ix = np.ascontiguousarray(idx, dtype=np.int64)
    cdef long[::1] iv = ix
    cdef Py_ssize_t b = iv.shape[0], d = Z.shape[1]
    cdef Py_ssize_t k, j
    cdef long i
    cdef double t, ts, c
    out_arr = np.zeros(d)
    cdef double[::1] out = out_arr
    with nogil:
        for k in range(b):
            i = iv[k]
            t = 0.0
            ts = 0.0
            for j in range(d):
                t += Z[i, j] * x[j]
                ts += Z[i, j] * x_snap[j]
            c = _coeff(kind, t, o[i]) - _coeff(kind, ts, o[i])
            for j in range(d):
                out[j] += c * Z[i, j]
        for j in range(d):
            out[j] = out[j] / b + mu * (x[j] - x_snap[j]) + z_snap[j]
    return out_arr


def total_loss(double[:, ::1] Z, double[::1] o, int kind, double mu,
               double[::1] x):
    cdef Py_ssize_t n = Z.shape[0], d = Z.shape[1]
    cdef Py_ssize_t i, j
    cdef double t, acc = 0.0, xx = 0.0
    with nogil:
        for i in range(n):
            t = 0.0
            for j in range(d):
                t += Z[i, j] * x[j]
            acc += _value(kind, t, o[i])
        for j in range(d):
            xx += x[j] * x[j]
    return acc / n + 0.5 * mu * xx
