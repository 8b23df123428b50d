"""Restoration evaluation: per-sample metrics, aggregates, CSV reports and timing.

CSV schemas (comma separated, header row, floats written with ``repr`` so
values round-trip exactly):

``per_sample.csv``
    sample_id, group, target_snr, corrupted_snr, restored_snr, improvement,
    psnr, mse
``summary.csv``
    group, count, mean_corrupted_snr, mean_restored_snr, mean_improvement,
    median_improvement, mean_psnr, mean_mse, frac_improved
    (first row is ``all``; then one row per artifact subset in BRSR mode or
    per SNR level in baseline mode)
``histogram.csv``
    bin_lo, bin_hi, count over improvement, 1 dB bins on integer edges
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tensor, no_grad
from .dataset import BrsrDataset, SplitView, open_dataset
from .metrics import SNR_CAP_DB, mse, psnr, snr
from .models import Generator, GeneratorConfig
from .training import load_generator, model_inputs, restore, restore_cascade

__all__ = ["snr", "psnr", "mse", "SNR_CAP_DB", "MetricsReport", "evaluate", "evaluate_arrays",
           "timing_report", "RESTORERS"]

RESTORERS = ("model", "identity", "oracle")
SAMPLE_COLUMNS = ("sample_id", "group", "target_snr", "corrupted_snr", "restored_snr", "improvement", "psnr", "mse")
SUMMARY_COLUMNS = ("group", "count", "mean_corrupted_snr", "mean_restored_snr", "mean_improvement",
                   "median_improvement", "mean_psnr", "mean_mse", "frac_improved")


@dataclass
class MetricsReport:
    sample_id: np.ndarray
    group: list
    target_snr: np.ndarray
    corrupted_snr: np.ndarray
    restored_snr: np.ndarray
    psnr: np.ndarray
    mse: np.ndarray
    mode: str = "single"
    meta: dict = field(default_factory=dict)

    @property
    def improvement(self) -> np.ndarray:
        return self.restored_snr - self.corrupted_snr

    def _agg(self, mask) -> dict:
        imp = self.improvement[mask]
        return {
            "count": int(mask.sum()),
            "mean_corrupted_snr": float(np.mean(self.corrupted_snr[mask])),
            "mean_restored_snr": float(np.mean(self.restored_snr[mask])),
            "mean_improvement": float(np.mean(imp)),
            "median_improvement": float(np.median(imp)),
            "mean_psnr": float(np.mean(self.psnr[mask])),
            "mean_mse": float(np.mean(self.mse[mask])),
            "frac_improved": float(np.mean(imp > 0)),
        }

    @property
    def overall(self) -> dict:
        return self._agg(np.ones(len(self.group), dtype=bool))

    def groups(self) -> dict:
        names = np.array(self.group)
        return {g: self._agg(names == g) for g in sorted(set(self.group), key=_group_key)}

    def histogram(self) -> tuple:
        imp = self.improvement
        lo, hi = np.floor(imp.min()), np.floor(imp.max()) + 1.0
        edges = np.arange(lo, hi + 1.0)
        counts, _ = np.histogram(imp, bins=edges)
        return edges, counts

    # -- csv ----------------------------------------------------------------
    def per_sample_rows(self):
        imp = self.improvement
        for i in range(len(self.group)):
            yield [int(self.sample_id[i]), self.group[i], repr(float(self.target_snr[i])),
                   repr(float(self.corrupted_snr[i])), repr(float(self.restored_snr[i])),
                   repr(float(imp[i])), repr(float(self.psnr[i])), repr(float(self.mse[i]))]

    def write(self, out_dir) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {k: out / f"{k}.csv" for k in ("per_sample", "summary", "histogram")}
        with open(paths["per_sample"], "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(SAMPLE_COLUMNS)
            w.writerows(self.per_sample_rows())
        with open(paths["summary"], "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(SUMMARY_COLUMNS)
            for name, agg in [("all", self.overall), *self.groups().items()]:
                w.writerow([name] + [agg["count"]] + [repr(agg[c]) for c in SUMMARY_COLUMNS[2:]])
        edges, counts = self.histogram()
        with open(paths["histogram"], "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(("bin_lo", "bin_hi", "count"))
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                w.writerow([repr(float(lo)), repr(float(hi)), int(c)])
        return paths


def _group_key(g: str):
    try:
        return (0, float(g.replace(" dB", "")), g)
    except ValueError:
        return (1, 0.0, g)


def _groups(view: SplitView, mode: str) -> list:
    if mode == "baseline":
        return [f"{t:g} dB" for t in view.provenance["target_snr"]]
    return view.artifact_subsets


def evaluate_arrays(clean, corrupted, restored, target_snr=None, groups=None, sample_id=None,
                    mode: str = "single", meta=None) -> MetricsReport:
    clean = np.asarray(clean)
    n = clean.shape[0]
    return MetricsReport(
        sample_id=np.arange(n) if sample_id is None else np.asarray(sample_id),
        group=list(groups) if groups is not None else ["all"] * n,
        target_snr=np.full(n, np.nan) if target_snr is None else np.asarray(target_snr, dtype=np.float64),
        corrupted_snr=np.atleast_1d(snr(clean, corrupted)),
        restored_snr=np.atleast_1d(snr(clean, restored)),
        psnr=np.atleast_1d(psnr(clean, restored)),
        mse=np.atleast_1d(mse(clean, restored)),
        mode=mode, meta=dict(meta or {}),
    )


def evaluate(checkpoint, dataset, split: str = "test", mode: str = "single", second=None,
             restorer: str = "model", batch_size: int = 64) -> MetricsReport:
    """Restore every sample of ``split`` and score it against the stored clean signal.

    ``restorer`` selects the trained model or one of the controls: ``identity``
    returns the corrupted input, ``oracle`` returns the clean signal.
    """
    if restorer not in RESTORERS:
        raise ValueError(f"unknown restorer {restorer!r}; expected one of {RESTORERS}")
    if mode not in ("single", "cascade"):
        raise ValueError(f"mode must be 'single' or 'cascade', got {mode!r}")
    if isinstance(dataset, SplitView):
        view, ds_mode = dataset, "brsr"
    else:
        ds = dataset if isinstance(dataset, BrsrDataset) else open_dataset(dataset)
        view, ds_mode = ds.split(split), ds.manifest.mode
    if len(view) == 0:
        raise ValueError(f"split {view.name!r} is empty")
    if restorer == "identity":
        restored = view.corrupted
    elif restorer == "oracle":
        restored = view.clean
    elif mode == "cascade":
        if second is None:
            raise ValueError("cascade evaluation needs a second-pass checkpoint")
        restored = restore_cascade(checkpoint, second, view.corrupted, batch_size)
    else:
        restored = restore(checkpoint, view.corrupted, batch_size)
    return evaluate_arrays(view.clean, view.corrupted, restored, view.provenance["target_snr"],
                           _groups(view, ds_mode), view.indices, mode,
                           {"split": view.name, "restorer": restorer, "dataset_mode": ds_mode})


def timing_report(checkpoint=None, batch_size: int = 64, n_batches: int = 100, warmup: int = 3,
                  length: int = 1024, seed: int = 0) -> dict:
    """Wall-clock inference cost in milliseconds per signal (eval mode, no graph)."""
    gen = load_generator(checkpoint) if checkpoint is not None else Generator(GeneratorConfig())
    gen.eval()
    rng = np.random.default_rng(seed)
    dtype = gen.encoder[0].main.weight.dtype
    x = Tensor(model_inputs(rng.standard_normal((batch_size, gen.config.in_channels, length))).astype(dtype))
    times = []
    with no_grad():
        for i in range(warmup + n_batches):
            t0 = time.perf_counter()
            gen(x)
            if i >= warmup:
                times.append(time.perf_counter() - t0)
    per_batch = float(np.mean(times))
    return {"ms_per_signal": 1000.0 * per_batch / batch_size, "batch_size": batch_size, "n_batches": n_batches,
            "ms_per_batch_median": 1000.0 * float(np.median(times)), "q": gen.config.q}
