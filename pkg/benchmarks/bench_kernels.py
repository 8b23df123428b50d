"""Compare the compiled and numpy kernel backends.

Usage::

    python benchmarks/bench_kernels.py [--repeats 20] [--train-steps 3]

Per-kernel timings use shapes from the generator's first encoder blocks at
batch 64. ``--train-steps`` additionally times full training iterations in a
subprocess per backend (``BRSR_PURE_PYTHON=1`` forces the fallback).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from brsr import _kernels

CASES = [
    # name, (B, C, L), Q, K, stride
    ("enc0 2x1024 s2", (64, 2, 1024), 3, 3, 2),
    ("enc1 16x512 s2", (64, 16, 512), 3, 3, 2),
    ("dec 48x1024 s1", (64, 48, 1024), 3, 3, 1),
    ("dec 40x256 s1", (64, 40, 256), 3, 3, 1),
]

STEP_SCRIPT = """
import time, numpy as np
from brsr import _kernels, training as T
from brsr.autodiff import Adam, Tensor
from brsr.models import Generator, Discriminator
rng = np.random.default_rng(0)
x = Tensor(rng.uniform(-1, 1, (64, 2, 1024)).astype(np.float32))
y = Tensor(rng.uniform(-1, 1, (64, 2, 1024)).astype(np.float32))
G, D = Generator(), Discriminator()
og, od = Adam(G.parameters()), Adam(D.parameters())
cfg = T.TrainConfig()
T._iteration(G, D, og, od, x, y, cfg)
t = []
for _ in range({n}):
    t0 = time.perf_counter(); T._iteration(G, D, og, od, x, y, cfg); t.append(time.perf_counter() - t0)
print(_kernels.BACKEND, np.median(t))
"""


def bench(fn, repeats):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeats)) * 1e3


def kernel_table(repeats):
    mods = _kernels.backends()
    names = list(mods)
    print(f"{'kernel':<34}" + "".join(f"{n:>12}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    rng = np.random.default_rng(0)
    for label, shape, q, k, stride in CASES:
        x = rng.uniform(-1, 1, shape).astype(np.float32)
        pad = k // 2
        cols = mods["numpy"].power_im2col(x, q, k, stride, pad)
        d = rng.standard_normal(cols.shape).astype(np.float32)
        pw = mods["numpy"].power_buffer(x, q, pad)
        dpw = rng.standard_normal(pw.shape).astype(np.float32)
        y, s = mods["numpy"].instance_norm_forward(x, 1e-5)
        rows = {
            "im2col": lambda m: m.power_im2col(x, q, k, stride, pad),
            "col2im": lambda m: m.power_col2im(d, x, q, k, stride, pad),
            "power_buffer": lambda m: m.power_buffer(x, q, pad),
            "power_buffer_grad": lambda m: m.power_buffer_grad(dpw, x, q, pad),
            "instance_norm fwd": lambda m: m.instance_norm_forward(x, 1e-5),
            "instance_norm bwd": lambda m: m.instance_norm_backward(x, y, s),
        }
        for op, call in rows.items():
            ms = [bench(lambda m=mods[n]: call(m), repeats) for n in names]
            line = f"{op + ' ' + label:<34}" + "".join(f"{v:>10.2f}ms" for v in ms)
            if len(ms) > 1:
                line += f"{ms[0] / ms[1]:>11.1f}x"
            print(line)


def step_table(n):
    print(f"\nfull training iteration, batch 64 (median of {n})")
    for pure in ("0", "1"):
        env = dict(os.environ, BRSR_PURE_PYTHON=pure, OMP_NUM_THREADS="1", OPENBLAS_NUM_THREADS="1")
        out = subprocess.run([sys.executable, "-c", STEP_SCRIPT.format(n=n)], env=env, capture_output=True,
                             text=True, check=True).stdout.split()
        print(f"  {out[0]:<8} {float(out[1]):.3f} s")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--train-steps", type=int, default=3)
    args = ap.parse_args()
    print(f"active backend: {_kernels.BACKEND}\n")
    kernel_table(args.repeats)
    if args.train_steps:
        step_table(args.train_steps)


if __name__ == "__main__":
    main()
