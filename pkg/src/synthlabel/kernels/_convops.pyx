# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: valid conv2d forward/backward and 2-D max pooling.

Semantics match kernels.pyops exactly (up to floating-point summation
order): valid cross-correlation, non-overlapping pooling, first-maximum
tie rule.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def conv2d_forward(double[:, :, :, ::1] x, double[:, :, :, ::1] kernels, int stride):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t k = kernels.shape[0], kh = kernels.shape[2], kw = kernels.shape[3]
    cdef Py_ssize_t ho = (h - kh) // stride + 1
    cdef Py_ssize_t wo = (w - kw) // stride + 1
    out_arr = np.zeros((n, k, ho, wo), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t ni, ki, ci, i, j, oi, oj
    cdef double kv
    cdef double* out_row
    cdef double* x_row
    with nogil:
        for ni in range(n):
            for ki in range(k):
                for ci in range(c):
                    for i in range(kh):
                        for j in range(kw):
                            kv = kernels[ki, ci, i, j]
                            # one axpy per (tap, output row): both rows are
                            # contiguous at stride 1, which is what the
                            # vectorizer needs
                            for oi in range(ho):
                                out_row = &out[ni, ki, oi, 0]
                                x_row = &x[ni, ci, oi * stride + i, j]
                                if stride == 1:
                                    for oj in range(wo):
                                        out_row[oj] += kv * x_row[oj]
                                else:
                                    for oj in range(wo):
                                        out_row[oj] += kv * x_row[oj * stride]
    return out_arr


def conv2d_backward_kernels(double[:, :, :, ::1] x, double[:, :, :, ::1] grad_out,
                            int stride, int kh, int kw):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t k = grad_out.shape[1], ho = grad_out.shape[2], wo = grad_out.shape[3]
    gk_arr = np.zeros((k, c, kh, kw), dtype=np.float64)
    cdef double[:, :, :, ::1] gk = gk_arr
    cdef Py_ssize_t ni, ki, ci, i, j, oi, oj
    cdef double acc
    cdef double* g_row
    cdef double* x_row
    # per-column partial sums: a scalar accumulator is a loop-carried
    # dependency the compiler refuses to vectorize under strict FP
    buf_arr = np.zeros(wo, dtype=np.float64)
    cdef double[::1] buf_mv = buf_arr
    cdef double* buf = &buf_mv[0]
    with nogil:
        for ki in range(k):
            for ci in range(c):
                for i in range(kh):
                    for j in range(kw):
                        for oj in range(wo):
                            buf[oj] = 0.0
                        for ni in range(n):
                            for oi in range(ho):
                                g_row = &grad_out[ni, ki, oi, 0]
                                x_row = &x[ni, ci, oi * stride + i, j]
                                if stride == 1:
                                    for oj in range(wo):
                                        buf[oj] += g_row[oj] * x_row[oj]
                                else:
                                    for oj in range(wo):
                                        buf[oj] += g_row[oj] * x_row[oj * stride]
                        acc = 0.0
                        for oj in range(wo):
                            acc += buf[oj]
                        gk[ki, ci, i, j] = acc
    return gk_arr


def conv2d_backward_input(double[:, :, :, ::1] grad_out, double[:, :, :, ::1] kernels,
                          int stride, int h, int w):
    cdef Py_ssize_t n = grad_out.shape[0], k = grad_out.shape[1]
    cdef Py_ssize_t ho = grad_out.shape[2], wo = grad_out.shape[3]
    cdef Py_ssize_t c = kernels.shape[1], kh = kernels.shape[2], kw = kernels.shape[3]
    dx_arr = np.zeros((n, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t ni, ki, ci, i, j, oi, oj
    cdef double kv
    cdef double* g_row
    cdef double* dx_row
    with nogil:
        for ni in range(n):
            for ki in range(k):
                for ci in range(c):
                    for i in range(kh):
                        for j in range(kw):
                            kv = kernels[ki, ci, i, j]
                            # scatter is an axpy per (tap, output row) once
                            # the tap weight is hoisted
                            for oi in range(ho):
                                g_row = &grad_out[ni, ki, oi, 0]
                                dx_row = &dx[ni, ci, oi * stride + i, j]
                                if stride == 1:
                                    for oj in range(wo):
                                        dx_row[oj] += kv * g_row[oj]
                                else:
                                    for oj in range(wo):
                                        dx_row[oj * stride] += kv * g_row[oj]
    return dx_arr


def maxpool2d_forward(double[:, :, :, ::1] x, int size):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = h // size, wo = w // size
    out_arr = np.empty((n, c, ho, wo), dtype=np.float64)
    idx_arr = np.empty((n, c, ho, wo), dtype=np.int64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef long long[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t ni, ci, oi, oj, i, j
    cdef double best, v
    cdef long long best_at
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for oi in range(ho):
                    for oj in range(wo):
                        best = x[ni, ci, oi * size, oj * size]
                        best_at = 0
                        for i in range(size):
                            for j in range(size):
                                v = x[ni, ci, oi * size + i, oj * size + j]
                                if v > best:
                                    best = v
                                    best_at = i * size + j
                        out[ni, ci, oi, oj] = best
                        idx[ni, ci, oi, oj] = best_at
    return out_arr, idx_arr


def maxpool2d_backward(double[:, :, :, ::1] grad_out, long long[:, :, :, ::1] idx,
                       int size, int h, int w):
    cdef Py_ssize_t n = grad_out.shape[0], c = grad_out.shape[1]
    cdef Py_ssize_t ho = grad_out.shape[2], wo = grad_out.shape[3]
    dx_arr = np.zeros((n, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t ni, ci, oi, oj
    cdef long long at
    with nogil:
        for ni in range(n):
            for ci in range(c):
                for oi in range(ho):
                    for oj in range(wo):
                        at = idx[ni, ci, oi, oj]
                        dx[ni, ci, oi * size + at // size, oj * size + at % size] += grad_out[ni, ci, oi, oj]
    return dx_arr
