# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_fallback``; same signatures and layouts."""

import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.math cimport sqrt

cnp.import_array()


def power_im2col(floating[:, :, ::1] x, int q, int k, int stride, int pad):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t lout = (L + 2 * pad - k) // stride + 1
    cdef Py_ssize_t qc = q * C, width = k * q * C
    dtype = np.float32 if floating is float else np.float64
    out = np.empty((B * lout, width), dtype=dtype)
    pw_arr = np.zeros((L + 2 * pad, q, C), dtype=dtype)
    cdef floating[:, ::1] cols = out
    cdef floating[:, :, ::1] pw = pw_arr
    cdef Py_ssize_t b, c, p, t, i, n
    cdef floating v, acc
    cdef floating* dst
    cdef floating* src
    for b in range(B):
        for c in range(C):
            for i in range(L):
                v = x[b, c, i]
                acc = v
                pw[i + pad, 0, c] = v
                for p in range(1, q):
                    acc = acc * v
                    pw[i + pad, p, c] = acc
        for t in range(lout):
            dst = &cols[b * lout + t, 0]
            src = &pw[t * stride, 0, 0]
            for n in range(width):
                dst[n] = src[n]
    return out


def power_col2im(floating[:, ::1] dcols, floating[:, :, ::1] x, int q, int k, int stride, int pad):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], L = x.shape[2]
    cdef Py_ssize_t lout = (L + 2 * pad - k) // stride + 1
    cdef Py_ssize_t width = k * q * C
    dtype = np.float32 if floating is float else np.float64
    out = np.empty((B, C, L), dtype=dtype)
    acc_arr = np.empty((L + 2 * pad, q, C), dtype=dtype)
    cdef floating[:, :, ::1] dx = out
    cdef floating[:, :, ::1] acc = acc_arr
    cdef Py_ssize_t b, c, p, t, i, n
    cdef floating v, xp, s
    cdef floating* src
    cdef floating* dst
    for b in range(B):
        acc[:, :, :] = 0
        for t in range(lout):
            src = &dcols[b * lout + t, 0]
            dst = &acc[t * stride, 0, 0]
            for n in range(width):
                dst[n] += src[n]
        for c in range(C):
            for i in range(L):
                v = x[b, c, i]
                s = acc[i + pad, 0, c]
                xp = 1
                for p in range(1, q):
                    xp = xp * v
                    s = s + (p + 1) * xp * acc[i + pad, p, c]
                dx[b, c, i] = s
    return out


def power_buffer(floating[:, :, ::1] x, int q, int pad):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], L = x.shape[2]
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros((B, L + 2 * pad, q, C), dtype=dtype)
    cdef floating[:, :, :, ::1] pw = out
    cdef Py_ssize_t b, c, p, i
    cdef floating v, acc
    for b in range(B):
        for c in range(C):
            for i in range(L):
                v = x[b, c, i]
                acc = v
                pw[b, i + pad, 0, c] = v
                for p in range(1, q):
                    acc = acc * v
                    pw[b, i + pad, p, c] = acc
    return out


def power_buffer_grad(floating[:, :, :, ::1] dpw, floating[:, :, ::1] x, int q, int pad):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], L = x.shape[2]
    dtype = np.float32 if floating is float else np.float64
    out = np.empty((B, C, L), dtype=dtype)
    cdef floating[:, :, ::1] dx = out
    cdef Py_ssize_t b, c, p, i
    cdef floating v, xp, s
    for b in range(B):
        for c in range(C):
            for i in range(L):
                v = x[b, c, i]
                s = dpw[b, i + pad, 0, c]
                xp = 1
                for p in range(1, q):
                    xp = xp * v
                    s = s + (p + 1) * xp * dpw[b, i + pad, p, c]
                dx[b, c, i] = s
    return out


def instance_norm_forward(floating[:, :, ::1] x, double eps):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], L = x.shape[2]
    dtype = np.float32 if floating is float else np.float64
    y_arr = np.empty((B, C, L), dtype=dtype)
    s_arr = np.empty((B, C), dtype=dtype)
    cdef floating[:, :, ::1] y = y_arr
    cdef floating[:, ::1] inv = s_arr
    cdef Py_ssize_t b, c, i
    cdef double mean, var, d
    cdef floating fmean, finv
    for b in range(B):
        for c in range(C):
            mean = 0
            for i in range(L):
                mean += x[b, c, i]
            mean /= L
            fmean = <floating>mean
            var = 0
            for i in range(L):
                d = <double>(x[b, c, i] - fmean)
                var += d * d
            var /= L
            finv = <floating>(1.0 / sqrt(var + eps))
            inv[b, c] = finv
            for i in range(L):
                y[b, c, i] = (x[b, c, i] - fmean) * finv
    return y_arr, s_arr


def instance_norm_backward(floating[:, :, ::1] g, floating[:, :, ::1] y, floating[:, ::1] inv_std):
    cdef Py_ssize_t B = g.shape[0], C = g.shape[1], L = g.shape[2]
    dtype = np.float32 if floating is float else np.float64
    out = np.empty((B, C, L), dtype=dtype)
    cdef floating[:, :, ::1] dx = out
    cdef Py_ssize_t b, c, i
    cdef double mg, mgy
    cdef floating fmg, fmgy, finv
    for b in range(B):
        for c in range(C):
            mg = 0
            mgy = 0
            for i in range(L):
                mg += g[b, c, i]
                mgy += g[b, c, i] * y[b, c, i]
            fmg = <floating>(mg / L)
            fmgy = <floating>(mgy / L)
            finv = inv_std[b, c]
            for i in range(L):
                dx[b, c, i] = finv * (g[b, c, i] - fmg - y[b, c, i] * fmgy)
    return out
