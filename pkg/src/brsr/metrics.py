"""Restoration metrics: SNR, PSNR and MSE over I/Q signals.

All functions accept a single signal ``(C, L)`` or a batch ``(B, C, L)``; a
batch returns one value per sample. Channels are pooled jointly. Arithmetic is
carried out in float64 whatever the input dtype.
"""

from __future__ import annotations

import numpy as np

SNR_CAP_DB = 150.0


def _pair(x, x_hat):
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    axes = tuple(range(1, x.ndim)) if x.ndim == 3 else None
    return x, x_hat, axes


def _ratio_db(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(num / np.where(den > 0, den, 1.0))
    db = np.where(den > 0, np.minimum(db, SNR_CAP_DB), SNR_CAP_DB)
    return float(db) if db.ndim == 0 else db


def snr(x, x_hat):
    """``10 log10(sum x^2 / sum (x - x_hat)^2)``, capped at 150 dB."""
    x, x_hat, axes = _pair(x, x_hat)
    energy = np.sum(x * x, axis=axes)
    if np.any(energy <= 0):
        raise ValueError("SNR undefined for a zero-energy clean signal")
    resid = x - x_hat
    return _ratio_db(energy, np.sum(resid * resid, axis=axes))


def mse(x, x_hat):
    x, x_hat, axes = _pair(x, x_hat)
    resid = x - x_hat
    out = np.mean(resid * resid, axis=axes)
    return float(out) if np.ndim(out) == 0 else out


def psnr(x, x_hat):
    """``10 log10(P_max^2 / MSE)`` with ``P_max = max |x|`` of the clean signal."""
    x, x_hat, axes = _pair(x, x_hat)
    peak = np.max(np.abs(x), axis=axes)
    if np.any(peak <= 0):
        raise ValueError("PSNR undefined for a zero clean signal")
    resid = x - x_hat
    return _ratio_db(peak * peak, np.mean(resid * resid, axis=axes))
