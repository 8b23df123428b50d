"""Numpy implementations of the hot kernels.

Used when the compiled extension is unavailable or ``BRSR_PURE_PYTHON=1``.
Column matrices have one row per ``(batch, output position)`` and columns
ordered ``(tap, power, channel)``; with that order each row of a stride-1
convolution is one contiguous slice of the padded power buffer.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided


def _power_buffer(x, q, pad):
    b, c, length = x.shape
    pw = np.zeros((b, length + 2 * pad, q, c), dtype=x.dtype)
    xt = x.transpose(0, 2, 1)
    body = pw[:, pad:pad + length]
    body[:, :, 0] = xt
    for p in range(1, q):
        np.multiply(body[:, :, p - 1], xt, out=body[:, :, p])
    return pw


def power_buffer(x, q, pad):
    """Zero-padded powers laid out ``(B, L + 2*pad, q, C)``."""
    return _power_buffer(x, q, pad)


def power_buffer_grad(dpw, x, q, pad):
    """Chain a gradient w.r.t. ``power_buffer(x)`` back to ``x``."""
    length = x.shape[2]
    acc = dpw[:, pad:pad + length]
    xt = x.transpose(0, 2, 1)
    dxt = acc[:, :, 0].copy()
    xpow = None
    for p in range(1, q):
        xpow = xt if xpow is None else xpow * xt
        dxt += (p + 1) * xpow * acc[:, :, p]
    return np.ascontiguousarray(dxt.transpose(0, 2, 1))


def power_im2col(x, q, k, stride, pad):
    b, c, length = x.shape
    lout = (length + 2 * pad - k) // stride + 1
    pw = _power_buffer(x, q, pad)
    s0, s1 = pw.strides[0], pw.strides[1]
    win = as_strided(pw, shape=(b, lout, k * q * c), strides=(s0, stride * s1, pw.itemsize), writeable=False)
    return win.reshape(b * lout, k * q * c)


def power_col2im(dcols, x, q, k, stride, pad):
    b, c, length = x.shape
    lout = (length + 2 * pad - k) // stride + 1
    d = dcols.reshape(b, lout, k, q, c)
    acc = np.zeros((b, length + 2 * pad, q, c), dtype=x.dtype)
    span = (lout - 1) * stride + 1
    for j in range(k):
        acc[:, j:j + span:stride] += d[:, :, j]
    return power_buffer_grad(acc, x, q, pad)


def instance_norm_forward(x, eps):
    mean = x.mean(axis=-1, keepdims=True, dtype=np.float64)
    centered = x - mean.astype(x.dtype)
    var = np.mean(np.square(centered, dtype=np.float64), axis=-1, keepdims=True)
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    return centered * inv_std, inv_std[..., 0]


def instance_norm_backward(g, y, inv_std):
    mg = g.mean(axis=-1, keepdims=True)
    mgy = (g * y).mean(axis=-1, keepdims=True)
    return inv_std[..., None] * (g - mg - y * mgy)
