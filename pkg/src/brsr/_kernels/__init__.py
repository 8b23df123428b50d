"""Hot-loop kernels with a compiled backend and a numpy fallback.

The backend is chosen once at import: the Cython extension ``_ext`` when it
was built and ``BRSR_PURE_PYTHON`` is unset, otherwise ``_fallback``.
"""

import os

import numpy as np

from . import _fallback

_impl = _fallback
BACKEND = "numpy"

if os.environ.get("BRSR_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ext as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback


def _c(a):
    return np.ascontiguousarray(a)


def power_im2col(x, q, k, stride, pad):
    return _impl.power_im2col(_c(x), q, k, stride, pad)


def power_col2im(dcols, x, q, k, stride, pad):
    return _impl.power_col2im(_c(dcols), _c(x), q, k, stride, pad)


def power_buffer(x, q, pad):
    return _impl.power_buffer(_c(x), q, pad)


def power_buffer_grad(dpw, x, q, pad):
    return _impl.power_buffer_grad(_c(dpw), _c(x), q, pad)


def instance_norm_forward(x, eps):
    return _impl.instance_norm_forward(_c(x), eps)


def instance_norm_backward(g, y, inv_std):
    return _impl.instance_norm_backward(_c(g), _c(y), _c(inv_std))


def backends():
    """Return the importable kernel modules keyed by name (for benchmarks/tests)."""
    out = {"numpy": _fallback}
    try:
        from . import _ext

        out["cython"] = _ext
    except ImportError:
        pass
    return out
