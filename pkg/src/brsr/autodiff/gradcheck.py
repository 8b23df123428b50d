"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_tensor: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    tolerance: float = 1e-4

    @property
    def passed(self) -> bool:
        return not self.failures and self.max_rel_error < self.tolerance


def _rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float) -> float:
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def gradient_check(build, tensors, tolerance: float = 1e-4, h: float = 1e-6,
                   max_elems: int | None = 64, seed: int = 0, names=None,
                   rel_floor: float = 1e-3) -> GradCheckReport:
    """Compare backprop gradients of ``build()`` against central differences.

    ``build`` rebuilds the graph from ``tensors`` on every call and returns a
    scalar Tensor; it must be deterministic (fix any dropout rng inside it).
    Error per tensor is ``max|a - n| / max(max|a|, max|n|, floor)`` over the
    checked entries, where ``floor = rel_floor * max|a|`` across all tensors
    (a tensor whose true gradient is zero then compares against the overall
    gradient scale instead of its own roundoff). At most ``max_elems`` entries
    per tensor are probed (all if None).
    """
    tensors = list(tensors)
    names = list(names) if names is not None else [t.name or f"t{i}" for i, t in enumerate(tensors)]
    for t in tensors:
        if t.dtype != np.float64:
            raise TypeError("gradient checks require float64 tensors")
        t.grad = None
    out = build()
    if out.data.size != 1:
        raise ValueError("gradient_check needs a scalar output")
    out.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]

    floor = max(rel_floor * max((float(np.max(np.abs(a))) for a in analytic if a.size), default=0.0), 1e-12)
    rng = np.random.default_rng(seed)
    report = GradCheckReport(max_rel_error=0.0, tolerance=tolerance)
    for t, name, a in zip(tensors, names, analytic):
        flat = t.data.reshape(-1)
        n = flat.size
        idx = np.arange(n) if max_elems is None or n <= max_elems else rng.choice(n, max_elems, replace=False)
        num = np.empty(idx.size)
        original = t.data
        for j, i in enumerate(idx):
            work = original.copy().reshape(-1)
            work[i] += h
            t.data = work.reshape(original.shape)
            fp = float(build().data)
            work[i] -= 2 * h
            t.data = work.reshape(original.shape)
            fm = float(build().data)
            num[j] = (fp - fm) / (2 * h)
        t.data = original
        err = _rel_error(a.reshape(-1)[idx], num, floor)
        report.per_tensor[name] = err
        report.max_rel_error = max(report.max_rel_error, err)
        if not err < tolerance:
            scale = max(np.max(np.abs(a.reshape(-1)[idx])), np.max(np.abs(num)), floor)
            bad = idx[np.abs(a.reshape(-1)[idx] - num) > tolerance * scale]
            report.failures.append({"tensor": name, "rel_error": err,
                                    "indices": [np.unravel_index(i, t.shape) for i in bad[:8]]})
    for t in tensors:
        t.grad = None
    return report
