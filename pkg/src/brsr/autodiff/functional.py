"""Differentiable primitives on batched 1D feature maps ``(B, C, L)``.

Every op returns a new :class:`Tensor` and never mutates its inputs. Backward
closures return one gradient per parent (``None`` for non-differentiable
parents).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .. import _kernels
from .tensor import Tensor

__all__ = [
    "add", "sub", "mul", "square", "abs", "sum", "mean", "reshape", "concat",
    "subsample", "elementwise_pow", "tanh", "conv1d", "selfonn_conv",
    "instance_norm", "dropout", "upsample_nearest", "adaptive_avg_pool",
    "dense", "stft", "max_normalize", "resolve_padding", "center_embed",
]


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    nd = g.ndim - len(shape)
    if nd:
        g = g.sum(axis=tuple(range(nd)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _lift(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


# -- elementwise --------------------------------------------------------------

def add(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a, b = b, a
    b = _lift(b, a)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = _lift(a, b)
    b = _lift(b, a)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a, b = b, a
    b = _lift(b, a)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._from_op(a.data * b.data, (a, b), backward, "mul")


def square(x: Tensor) -> Tensor:
    def backward(g):
        return (2.0 * g * x.data,)

    return Tensor._from_op(np.square(x.data), (x,), backward, "square")


def abs(x: Tensor) -> Tensor:  # noqa: A001
    def backward(g):
        return (g * np.sign(x.data),)

    return Tensor._from_op(np.abs(x.data), (x,), backward, "abs")


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor._from_op(np.asarray(out), (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    def backward(g):
        return (g.reshape(x.shape),)

    return Tensor._from_op(x.data.reshape(shape), (x,), backward, "reshape")


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._from_op(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


def subsample(x: Tensor, stride: int) -> Tensor:
    """Keep every ``stride``-th sample along the length axis."""
    if stride == 1:
        return x

    def backward(g):
        dx = np.zeros_like(x.data)
        dx[..., ::stride] = g
        return (dx,)

    return Tensor._from_op(np.ascontiguousarray(x.data[..., ::stride]), (x,), backward, "subsample")


def elementwise_pow(x: Tensor, q: int) -> Tensor:
    if int(q) != q or q < 1:
        raise ValueError(f"power must be a positive integer, got {q}")
    q = int(q)
    if q == 1:
        out = x.data.copy()
    else:
        out = x.data ** q

    def backward(g):
        if q == 1:
            return (g,)
        return (g * q * x.data ** (q - 1),)

    return Tensor._from_op(out, (x,), backward, "pow")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def backward(g):
        return (g * (1.0 - y * y),)

    return Tensor._from_op(y, (x,), backward, "tanh")


# -- convolutions ---------------------------------------------------------------

def resolve_padding(padding, k: int, stride: int) -> int:
    """``"same"`` maps to ``k // 2``; length-preserving for stride 1 and odd ``k``."""
    if padding == "same":
        if stride == 1 and k % 2 == 0:
            raise ValueError("'same' padding needs an odd kernel size")
        return k // 2
    pad = int(padding)
    if pad < 0:
        raise ValueError("padding must be non-negative")
    return pad


def _im2col_conv(x, w2t, q, k, stride, pad, lout, needs_grad, w_param, to_w_grad):
    b = x.shape[0]
    cout = w2t.shape[1]
    cols = _kernels.power_im2col(x.data, q, k, stride, pad)
    out2 = cols @ w2t
    out = np.ascontiguousarray(out2.reshape(b, lout, cout).transpose(0, 2, 1))
    if not needs_grad:
        cols = None

    def backward(g):
        gt = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(b * lout, cout)
        dw = to_w_grad(cols.T @ gt) if w_param.requires_grad else None
        dx = None
        if x.requires_grad:
            dx = _kernels.power_col2im(gt @ w2t.T, x.data, q, k, stride, pad)
        return dx, dw

    return out, backward


def _tapwise_conv(x, w2t, q, k, pad, lout, needs_grad, w_param, to_w_grad):
    """Stride-1 path: one GEMM per tap over row-shifted views of the flat power buffer.

    Rows that straddle two batch items are computed and then dropped, which
    avoids materializing the K-times larger column matrix.
    """
    b, c, _ = x.shape
    cout = w2t.shape[1]
    pw = _kernels.power_buffer(x.data, q, pad)
    lp = pw.shape[1]
    qc = q * c
    flat = pw.reshape(b * lp, qc)
    m = b * lp - (k - 1)
    acc = np.zeros((b * lp, cout), dtype=w2t.dtype)
    tmp = np.empty((m, cout), dtype=w2t.dtype)
    for j in range(k):
        np.matmul(flat[j:j + m], w2t[j * qc:(j + 1) * qc], out=tmp)
        acc[:m] += tmp
    out = np.ascontiguousarray(acc.reshape(b, lp, cout)[:, :lout].transpose(0, 2, 1))
    if not needs_grad:
        flat = pw = None

    def backward(g):
        gfull = np.zeros((b, lp, cout), dtype=g.dtype)
        gfull[:, :lout] = g.transpose(0, 2, 1)
        gflat = gfull.reshape(b * lp, cout)[:m]
        dw = None
        if w_param.requires_grad:
            dw2 = np.empty_like(w2t)
            for j in range(k):
                np.matmul(flat[j:j + m].T, gflat, out=dw2[j * qc:(j + 1) * qc])
            dw = to_w_grad(dw2)
        dx = None
        if x.requires_grad:
            dflat = np.zeros((b * lp, qc), dtype=g.dtype)
            tmp2 = np.empty((m, qc), dtype=g.dtype)
            for j in range(k):
                np.matmul(gflat, w2t[j * qc:(j + 1) * qc].T, out=tmp2)
                dflat[j:j + m] += tmp2
            dx = _kernels.power_buffer_grad(dflat.reshape(pw.shape), x.data, q, pad)
        return dx, dw

    return out, backward


def _power_conv(x: Tensor, w2t: np.ndarray, bias, q: int, k: int, stride: int, pad: int, op: str,
                w_param: Tensor, to_w_grad):
    """Shared forward/backward for plain and generative-neuron convolutions.

    ``w2t`` is the weight as a ``(K * Q * C_in, C_out)`` matrix matching the
    ``(tap, power, channel)`` column order of the kernels.
    """
    if x.ndim != 3:
        raise ValueError(f"{op}: expected (B, C, L) input, got shape {x.shape}")
    b, c, length = x.shape
    lout = (length + 2 * pad - k) // stride + 1
    if lout < 1:
        raise ValueError(f"{op}: input length {length} too short for kernel {k}")
    parents = (x, w_param) if bias is None else (x, w_param, bias)
    needs_grad = x.requires_grad or w_param.requires_grad or (bias is not None and bias.requires_grad)
    if stride == 1 and k > 1:
        out, backward = _tapwise_conv(x, w2t, q, k, pad, lout, needs_grad, w_param, to_w_grad)
    else:
        out, backward = _im2col_conv(x, w2t, q, k, stride, pad, lout, needs_grad, w_param, to_w_grad)
    if bias is not None:
        out += bias.data[None, :, None]

    def full_backward(g):
        dx, dw = backward(g)
        if bias is None:
            return dx, dw
        return dx, dw, g.sum(axis=(0, 2))

    return Tensor._from_op(out, parents, full_backward, op)


def conv1d(x: Tensor, kernel: Tensor, bias: Tensor | None = None, stride: int = 1, padding="same") -> Tensor:
    """Cross-correlation with zero padding; kernel shape ``(C_out, C_in, K)``."""
    if kernel.ndim != 3:
        raise ValueError(f"conv1d kernel must be (C_out, C_in, K), got {kernel.shape}")
    cout, cin, k = kernel.shape
    if x.ndim != 3 or x.shape[1] != cin:
        raise ValueError(f"conv1d: input {x.shape} does not match kernel {kernel.shape}")
    if stride < 1:
        raise ValueError("stride must be positive")
    pad = resolve_padding(padding, k, stride)
    w2t = np.ascontiguousarray(kernel.data.transpose(2, 1, 0)).reshape(k * cin, cout)

    def to_w_grad(dw):
        return np.ascontiguousarray(dw.reshape(k, cin, cout).transpose(2, 1, 0))

    return _power_conv(x, w2t, bias, 1, k, stride, pad, "conv1d", kernel, to_w_grad)


def selfonn_conv(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding="same") -> Tensor:
    """Generative-neuron convolution: ``bias + sum_q conv1d(weight[..., q-1], x**q)``.

    ``weight`` has shape ``(C_out, C_in, K, Q)``. The powers of ``x`` are
    formed once and shared by every output channel; the Q convolutions collapse
    into a single GEMM over the stacked powers.
    """
    if weight.ndim != 4:
        raise ValueError(f"Self-ONN weight must be (C_out, C_in, K, Q), got {weight.shape}")
    cout, cin, k, q = weight.shape
    if q < 1:
        raise ValueError("Q must be >= 1")
    if x.ndim != 3 or x.shape[1] != cin:
        raise ValueError(f"selfonn: input {x.shape} does not match weight {weight.shape}")
    if stride < 1:
        raise ValueError("stride must be positive")
    pad = resolve_padding(padding, k, stride)
    w2t = np.ascontiguousarray(weight.data.transpose(2, 3, 1, 0)).reshape(k * q * cin, cout)

    def to_w_grad(dw):
        return np.ascontiguousarray(dw.reshape(k, q, cin, cout).transpose(3, 2, 0, 1))

    return _power_conv(x, w2t, bias, q, k, stride, pad, "selfonn", weight, to_w_grad)


def center_embed(w: Tensor, k: int) -> Tensor:
    """Place a 1-tap kernel ``(C_out, C_in, 1, ...)`` at the center of a ``k``-tap one."""
    if w.shape[2] != 1 or k % 2 == 0:
        raise ValueError("center_embed needs a 1-tap kernel and an odd target size")
    out = np.zeros(w.shape[:2] + (k,) + w.shape[3:], dtype=w.dtype)
    out[:, :, k // 2] = w.data[:, :, 0]

    def backward(g):
        return (g[:, :, k // 2:k // 2 + 1].copy(),)

    return Tensor._from_op(out, (w,), backward, "center_embed")


# -- normalization / regularization -------------------------------------------------

def instance_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-sample, per-channel standardization over the length axis (no affine).

    Constant channels (including length 1) map to zeros through ``eps``.
    """
    if x.ndim != 3 or x.shape[-1] < 1:
        raise ValueError(f"instance_norm needs (B, C, L), got {x.shape}")
    y, inv_std = _kernels.instance_norm_forward(x.data, eps)

    def backward(g):
        return (_kernels.instance_norm_backward(g, y, inv_std),)

    return Tensor._from_op(y, (x,), backward, "instance_norm")


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: survivors scaled by ``1/(1-rate)`` at train time, identity in eval."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs an explicit rng")
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) * x.dtype.type(1.0 / (1.0 - rate))

    def backward(g):
        return (g * mask,)

    return Tensor._from_op(x.data * mask, (x,), backward, "dropout")


# -- resampling / heads ---------------------------------------------------------

def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    if factor < 1:
        raise ValueError("upsampling factor must be positive")
    if factor == 1:
        return x
    b, c, length = x.shape

    def backward(g):
        return (g.reshape(b, c, length, factor).sum(axis=-1),)

    return Tensor._from_op(np.repeat(x.data, factor, axis=-1), (x,), backward, "upsample")


def adaptive_avg_pool(x: Tensor) -> Tensor:
    """Average over the length axis to target length 1: ``(B, C, L) -> (B, C, 1)``."""
    length = x.shape[-1]

    def backward(g):
        return (np.broadcast_to(g / length, x.shape).astype(x.dtype),)

    return Tensor._from_op(x.data.mean(axis=-1, keepdims=True), (x,), backward, "avg_pool")


def dense(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map of the flattened per-sample features; weight is ``(out, in)``."""
    b = x.shape[0]
    flat = x.data.reshape(b, -1)
    if flat.shape[1] != weight.shape[1]:
        raise ValueError(f"dense: {flat.shape[1]} features vs weight {weight.shape}")
    out = flat @ weight.data.T
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        grads = ((g @ weight.data).reshape(x.shape), g.T @ flat)
        if bias is not None:
            grads += (g.sum(axis=0),)
        return grads

    return Tensor._from_op(out, parents, backward, "dense")


# -- spectral -----------------------------------------------------------------

def _dft_mats(window: np.ndarray, dtype):
    n = window.shape[0]
    m = np.arange(n)
    ang = 2.0 * np.pi * np.outer(m, m) / n
    cw = (window[:, None] * np.cos(ang)).astype(dtype)
    sw = (window[:, None] * np.sin(ang)).astype(dtype)
    return cw, sw


def stft(x: Tensor, window: np.ndarray, hop: int) -> Tensor:
    """Windowed DFT frames of the complex signal ``I + jQ``.

    ``x`` is ``(B, 2, L)``; the result is ``(B, 2, F, N)`` holding the real
    (index 0) and imaginary (index 1) parts, phase referenced to frame start.
    """
    if x.ndim != 3 or x.shape[1] != 2:
        raise ValueError(f"stft expects (B, 2, L), got {x.shape}")
    n = window.shape[0]
    b, _, length = x.shape
    if length < n or hop < 1 or hop > n:
        raise ValueError(f"invalid STFT setup: L={length}, N={n}, hop={hop}")
    n_frames = 1 + (length - n) // hop
    cw, sw = _dft_mats(window, x.dtype)
    frames = sliding_window_view(x.data, n, axis=-1)[:, :, ::hop][:, :, :n_frames]
    fi = np.ascontiguousarray(frames[:, 0])
    fq = np.ascontiguousarray(frames[:, 1])
    out = np.empty((b, 2, n_frames, n), dtype=x.dtype)
    out[:, 0] = fi @ cw + fq @ sw
    out[:, 1] = fq @ cw - fi @ sw

    def backward(g):
        gr, gi = g[:, 0], g[:, 1]
        dfi = gr @ cw.T - gi @ sw.T
        dfq = gr @ sw.T + gi @ cw.T
        dx = np.zeros_like(x.data)
        for f in range(n_frames):
            s = f * hop
            dx[:, 0, s:s + n] += dfi[:, f]
            dx[:, 1, s:s + n] += dfq[:, f]
        return (dx,)

    return Tensor._from_op(out, (x,), backward, "stft")


def max_normalize(x: Tensor, floor: float = 1e-12) -> Tensor:
    """Divide each sample (leading axis) by its own maximum, floored at ``floor``."""
    b = x.shape[0]
    flat = x.data.reshape(b, -1)
    idx = flat.argmax(axis=1)
    peak = flat[np.arange(b), idx]
    denom = np.maximum(peak, floor)
    shape = (b,) + (1,) * (x.ndim - 1)
    out = x.data / denom.reshape(shape)

    def backward(g):
        gflat = g.reshape(b, -1)
        dx = gflat / denom[:, None]
        active = peak >= floor
        corr = (gflat * flat).sum(axis=1) / (denom * denom)
        dx[np.arange(b)[active], idx[active]] -= corr[active]
        return (dx.reshape(x.shape),)

    return Tensor._from_op(out, (x,), backward, "max_normalize")
