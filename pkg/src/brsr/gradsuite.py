"""Finite-difference gradient suites for primitives, Self-ONN layers, blocks and losses.

Every case builds a small random float64 problem and returns a
:class:`GradCheckReport`. The scalar probed is ``sum(f(x) * r)`` with a fixed
random ``r`` so every output element contributes a distinct weight.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, gradient_check
from .autodiff import functional as F
from .losses import LossWeights, SpectrogramConfig, generator_loss
from .models import Discriminator, DiscriminatorConfig, ResDownBlock, ResUpBlock
from .selfonn import SelfOnn1d, SelfOnnLayerConfig

TOLERANCE = 1e-4


def _weighted(out: Tensor, r: np.ndarray) -> Tensor:
    return F.sum(F.mul(out, Tensor(r)))


def _probe(fn, inputs, rng, names=None, **kw):
    """Check ``fn(*inputs)`` through a random linear functional of its output."""
    with_r = {}

    def build():
        out = fn(*inputs)
        if "r" not in with_r:
            with_r["r"] = rng.standard_normal(out.shape)
        return _weighted(out, with_r["r"])

    return gradient_check(build, inputs, tolerance=TOLERANCE, names=names, **kw)


def _t(rng, shape, scale=1.0, lo=None):
    if lo is not None:
        return Tensor(rng.uniform(lo, scale, shape), requires_grad=True)
    return Tensor(scale * rng.standard_normal(shape), requires_grad=True)


def _model_params(model):
    named = list(model.named_parameters())
    return [p for _, p in named], [n for n, _ in named]


def case_conv1d(rng):
    b, cin, cout, k = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4), int(rng.choice([1, 3, 5]))
    length = int(rng.integers(6, 14))
    stride = int(rng.choice([1, 2]))
    x, w, bias = _t(rng, (b, cin, length)), _t(rng, (cout, cin, k)), _t(rng, (cout,))
    return _probe(lambda x, w, bias: F.conv1d(x, w, bias, stride), [x, w, bias], rng, ["x", "kernel", "bias"])


def case_elementwise_pow(rng):
    x = _t(rng, (2, 3, 7))
    q = int(rng.integers(1, 5))
    return _probe(lambda x: F.elementwise_pow(x, q), [x], rng, ["x"])


def case_tanh(rng):
    x = _t(rng, (2, 3, 9), 1.5)
    return _probe(F.tanh, [x], rng, ["x"])


def case_instance_norm(rng):
    x = _t(rng, (2, 3, int(rng.integers(4, 12))), 2.0)
    return _probe(F.instance_norm, [x], rng, ["x"])


def case_upsample(rng):
    x = _t(rng, (2, 3, 5))
    return _probe(lambda x: F.upsample_nearest(x, 2), [x], rng, ["x"])


def case_pool(rng):
    x = _t(rng, (3, 4, 8))
    return _probe(F.adaptive_avg_pool, [x], rng, ["x"])


def case_dense(rng):
    x, w, b = _t(rng, (3, 5)), _t(rng, (2, 5)), _t(rng, (2,))
    return _probe(F.dense, [x, w, b], rng, ["x", "weight", "bias"])


def case_selfonn(rng, q: int):
    cin, cout = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    k = int(rng.choice([1, 3]))
    stride = int(rng.choice([1, 2]))
    layer = SelfOnn1d(SelfOnnLayerConfig(cin, cout, k, q, stride), rng, np.float64)
    x = _t(rng, (2, cin, 8), 1.0, lo=-1.0)
    params, names = _model_params(layer)
    return _probe(lambda x, *_: layer(x), [x, *params], rng, ["x", *names])


def _block_case(rng, cls, length):
    cin, cout = int(rng.integers(2, 4)), int(rng.integers(2, 5))
    blk = cls(cin, cout, q=3, k=3, rng=rng, dropout=0.0, dtype=np.float64)
    x = _t(rng, (2, cin, length), 1.0, lo=-1.0)
    params, names = _model_params(blk)
    return _probe(lambda x, *_: blk(x), [x, *params], rng, ["x", *names])


def case_res_down(rng):
    return _block_case(rng, ResDownBlock, 8)


def case_res_up(rng):
    return _block_case(rng, ResUpBlock, 4)


def _small_discriminator(rng) -> Discriminator:
    cfg = DiscriminatorConfig(channels=[3, 3, 4, 4, 5, 5])
    return Discriminator(cfg, seed=int(rng.integers(2**31)), dtype=np.float64)


def case_discriminator(rng):
    disc = _small_discriminator(rng)
    x = _t(rng, (2, 2, 256), 1.0, lo=-1.0)
    params, names = _model_params(disc)
    return _probe(lambda x, *_: disc(x), [x, *params], rng, ["x", *names], max_elems=24)


def case_generator_loss(rng):
    """L_G on a restored batch including the spectrogram path and the adversarial score."""
    disc = _small_discriminator(rng)
    restored = _t(rng, (2, 2, 256), 0.8, lo=-0.8)
    clean = Tensor(rng.uniform(-1, 1, (2, 2, 256)))
    spec = SpectrogramConfig(n_fft=32, hop=16)
    weights = LossWeights(100.0, 200.0)
    params, names = _model_params(disc)

    def build():
        return generator_loss(restored, clean, disc(restored), weights, spec).total

    return gradient_check(build, [restored, *params[:2]], tolerance=TOLERANCE,
                          names=["restored", *names[:2]], max_elems=48)


def cases():
    out = [
        ("conv1d", case_conv1d),
        ("elementwise_pow", case_elementwise_pow),
        ("tanh", case_tanh),
        ("instance_norm", case_instance_norm),
        ("upsample", case_upsample),
        ("pool", case_pool),
        ("dense", case_dense),
    ]
    out += [(f"selfonn_q{q}", lambda rng, q=q: case_selfonn(rng, q)) for q in (1, 2, 3)]
    out += [
        ("res_down_block", case_res_down),
        ("res_up_block", case_res_up),
        ("discriminator", case_discriminator),
        ("generator_loss", case_generator_loss),
    ]
    return out


def run_suite(seed: int = 0, only=None):
    """Run every case once; returns ``[(name, report)]``."""
    results = []
    for i, (name, fn) in enumerate(cases()):
        if only and name not in only:
            continue
        rng = np.random.default_rng([seed, i])
        results.append((name, fn(rng)))
    return results


def format_table(results) -> str:
    width = max(len(n) for n, _ in results)
    lines = [f"{'case'.ljust(width)}  max_rel_error  status"]
    for name, rep in results:
        lines.append(f"{name.ljust(width)}  {rep.max_rel_error:13.3e}  {'ok' if rep.passed else 'FAIL'}")
    return "\n".join(lines)


__all__ = ["run_suite", "cases", "format_table", "TOLERANCE"]
