# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot loops. Float64 only; see _pykernels for the contract."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs, INFINITY

cnp.import_array()


def unfold1d(const double[:, :, ::1] x, Py_ssize_t k, Py_ssize_t pad,
             Py_ssize_t stride, Py_ssize_t t_out):
    cdef Py_ssize_t n = x.shape[0], t_in = x.shape[1], c = x.shape[2]
    cols_arr = np.zeros((n, t_out, k, c), dtype=np.float64)
    cdef double[:, :, :, ::1] cols = cols_arr
    cdef Py_ssize_t b, t, j, ch, src
    with nogil:
        for b in range(n):
            for t in range(t_out):
                for j in range(k):
                    src = t * stride + j - pad
                    if src < 0 or src >= t_in:
                        continue
                    for ch in range(c):
                        cols[b, t, j, ch] = x[b, src, ch]
    return cols_arr


def fold1d(const double[:, :, :, ::1] cols, Py_ssize_t t_in, Py_ssize_t pad,
           Py_ssize_t stride):
    cdef Py_ssize_t n = cols.shape[0], t_out = cols.shape[1]
    cdef Py_ssize_t k = cols.shape[2], c = cols.shape[3]
    out_arr = np.zeros((n, t_in, c), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t b, t, j, ch, dst
    with nogil:
        for b in range(n):
            for t in range(t_out):
                for j in range(k):
                    dst = t * stride + j - pad
                    if dst < 0 or dst >= t_in:
                        continue
                    for ch in range(c):
                        out[b, dst, ch] += cols[b, t, j, ch]
    return out_arr


def maxpool1d_forward(const double[:, :, ::1] x, Py_ssize_t k, Py_ssize_t stride):
    cdef Py_ssize_t n = x.shape[0], t_in = x.shape[1], c = x.shape[2]
    cdef Py_ssize_t t_out = (t_in - k) // stride + 1
    out_arr = np.empty((n, t_out, c), dtype=np.float64)
    idx_arr = np.empty((n, t_out, c), dtype=np.int64)
    cdef double[:, :, ::1] out = out_arr
    cdef cnp.int64_t[:, :, ::1] idx = idx_arr
    cdef Py_ssize_t b, t, j, ch, best_i
    cdef double best, v
    with nogil:
        for b in range(n):
            for t in range(t_out):
                for ch in range(c):
                    best_i = t * stride
                    best = x[b, best_i, ch]
                    for j in range(1, k):
                        v = x[b, t * stride + j, ch]
                        if v > best:  # strict: first index wins ties
                            best = v
                            best_i = t * stride + j
                    out[b, t, ch] = best
                    idx[b, t, ch] = best_i
    return out_arr, idx_arr


def maxpool1d_backward(const double[:, :, ::1] grad, const cnp.int64_t[:, :, ::1] idx,
                       Py_ssize_t t_in):
    cdef Py_ssize_t n = grad.shape[0], t_out = grad.shape[1], c = grad.shape[2]
    out_arr = np.zeros((n, t_in, c), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t b, t, ch
    with nogil:
        for b in range(n):
            for t in range(t_out):
                for ch in range(c):
                    out[b, idx[b, t, ch], ch] += grad[b, t, ch]
    return out_arr


def conditional_affinities(const double[:, ::1] d2, double perplexity,
                           double tol=1e-5, int max_iter=100):
    cdef Py_ssize_t n = d2.shape[0]
    P_arr = np.zeros((n, n), dtype=np.float64)
    betas_arr = np.ones(n, dtype=np.float64)
    cdef double[:, ::1] P = P_arr
    cdef double[::1] betas = betas_arr
    cdef double target = log(perplexity)
    cdef Py_ssize_t i, j
    cdef int it
    cdef double beta, lo, hi, dmin, s, dot, h, w
    with nogil:
        for i in range(n):
            beta = 1.0
            lo = -INFINITY
            hi = INFINITY
            dmin = INFINITY
            for j in range(n):
                if j != i and d2[i, j] < dmin:
                    dmin = d2[i, j]
            for it in range(max_iter):
                s = 0.0
                dot = 0.0
                for j in range(n):
                    if j == i:
                        P[i, j] = 0.0
                        continue
                    w = exp(-(d2[i, j] - dmin) * beta)
                    P[i, j] = w
                    s += w
                    dot += w * (d2[i, j] - dmin)
                h = beta * dot / s + log(s)
                for j in range(n):
                    P[i, j] /= s
                if fabs(h - target) < tol:
                    break
                if h > target:
                    lo = beta
                    if hi == INFINITY:
                        beta = beta * 2.0
                    else:
                        beta = (beta + hi) / 2.0
                else:
                    hi = beta
                    if lo == -INFINITY:
                        beta = beta / 2.0
                    else:
                        beta = (beta + lo) / 2.0
            betas[i] = beta
    return P_arr, betas_arr


def tsne_gradient(const double[:, ::1] Y, const double[:, ::1] P, double exaggeration):
    cdef Py_ssize_t n = Y.shape[0], d = Y.shape[1]
    grad_arr = np.zeros((n, d), dtype=np.float64)
    num_arr = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] grad = grad_arr
    cdef double[:, ::1] num = num_arr
    cdef Py_ssize_t i, j, a
    cdef double z = 0.0, dist, diff, q, wgt, kl = 0.0
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                dist = 0.0
                for a in range(d):
                    diff = Y[i, a] - Y[j, a]
                    dist += diff * diff
                num[i, j] = 1.0 / (1.0 + dist)
                num[j, i] = num[i, j]
                z += 2.0 * num[i, j]
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                q = num[i, j] / z
                if q < 1e-12:
                    q = 1e-12
                wgt = (exaggeration * P[i, j] - q) * num[i, j]
                for a in range(d):
                    grad[i, a] += 4.0 * wgt * (Y[i, a] - Y[j, a])
                if P[i, j] > 0:
                    kl += P[i, j] * log(P[i, j] / q)
    return grad_arr, kl
