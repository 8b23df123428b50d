"""End-to-end acceptance criteria, each run at its stated scale and tolerance.

Every test records a PASS/FAIL line that is printed in the pytest terminal
summary under "acceptance criteria". Criteria 7-9 train real models and
dominate the runtime (about two hours on one CPU core).
"""

import time

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from brsr import cli, gradsuite
from brsr import dataset as D
from brsr import evaluation as E
from brsr import training as T
from brsr.autodiff import Tensor
from brsr.losses import SpectrogramConfig, spectrogram, stft
from brsr.models import Discriminator, Generator, count_parameters
from brsr.selfonn import SelfOnnLayerConfig, selfonn_forward
from brsr.waveforms import normalize, synthesize

pytestmark = pytest.mark.acceptance


@pytest.fixture(autouse=True, scope="module")
def one_thread():
    with threadpool_limits(1):
        yield


# -- 1 -----------------------------------------------------------------------

def test_c01_gradient_integrity(acceptance):
    t0 = time.perf_counter()
    results = gradsuite.run_suite(seed=0)
    elapsed = time.perf_counter() - t0
    names = {n for n, _ in results}
    expected = {"conv1d", "elementwise_pow", "tanh", "instance_norm", "upsample", "pool", "dense", "selfonn_q1",
                "selfonn_q2", "selfonn_q3", "res_down_block", "res_up_block", "discriminator", "generator_loss"}
    worst = max(r.max_rel_error for _, r in results)
    ok = names == expected and all(r.passed for _, r in results) and worst < 1e-4 and elapsed < 120
    acceptance(1, ok, f"{len(results)} suites, max rel err {worst:.2e}, {elapsed:.1f} s")
    assert ok, gradsuite.format_table(results)


# -- 2 -----------------------------------------------------------------------

def _plain_conv(x, w, b, stride):
    """Reference cross-correlation with zero 'same' padding, via np.correlate."""
    cout, cin, k = w.shape
    pad = k // 2
    out = []
    for n in range(x.shape[0]):
        rows = []
        for o in range(cout):
            acc = sum(np.correlate(np.pad(x[n, c], pad), w[o, c], "valid") for c in range(cin))
            rows.append(acc[::stride] + b[o])
        out.append(rows)
    return np.array(out)


def test_c02_selfonn_degeneracy(acceptance):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        cin, cout = rng.integers(1, 5, 2)
        k = int(rng.choice([1, 3, 5, 7]))
        stride = int(rng.choice([1, 2]))
        length = int(rng.integers(k, 40))
        cfg = SelfOnnLayerConfig(int(cin), int(cout), k, 1, stride)
        x = rng.uniform(-1, 1, (2, cin, length))
        w = rng.standard_normal((cout, cin, k, 1))
        b = rng.standard_normal(cout)
        got = selfonn_forward(Tensor(x), cfg, Tensor(w), Tensor(b)).data
        ref = _plain_conv(x, w[..., 0], b, stride)
        worst = max(worst, float(np.max(np.abs(got - ref))))
    ok = worst < 1e-6
    acceptance(2, ok, f"100 cases, max abs diff {worst:.2e}")
    assert ok


# -- 3 -----------------------------------------------------------------------

def test_c03_dataset_snr_calculus(acceptance):
    t0 = time.perf_counter()
    pool = D.build_interference_pool(3)
    cleans = [normalize(synthesize(i % 12, i)).as_array() for i in range(1000)]

    single_err = 0.0
    for i, x in enumerate(cleans):
        kind = D.ARTIFACT_KINDS[i % 3]
        rec = D.corrupt(x, [1, i], pool, kinds=[kind], pseudo_weights=[1.0])
        single_err = max(single_err, abs(rec.realized_snr - rec.target_snr))

    gaps = []
    for i, x in enumerate(cleans):
        rec = D.corrupt(x, [2, i], pool, kinds=["AWGN", "Interference"])
        w = np.array([a.pseudo_weight for a in rec.artifacts])
        gaps.append(rec.realized_snr - (rec.target_snr - 10 * np.log10(np.sum(w * w))))
    pair_err = abs(float(np.mean(gaps)))

    cfg = D.DatasetConfig(seed=3)
    corr = cfg.corruption
    x = cleans[0]
    targets = [D.corrupt(x, [3, i], pool, corr).target_snr for i in range(10_000)]
    mean_target = float(np.mean(targets))
    elapsed = time.perf_counter() - t0

    ok = single_err < 0.05 and pair_err < 0.2 and abs(mean_target + 2.0) <= 0.3 and elapsed < 60
    acceptance(3, ok, f"(a) max |err| {single_err:.2e} dB, (b) mean gap {pair_err:.3f} dB, "
                      f"(c) mean target {mean_target:.3f} dB, {elapsed:.1f} s")
    assert ok


# -- 4 -----------------------------------------------------------------------

def test_c04_baseline_grid(acceptance, tmp_path):
    per = {"train": 5, "val": 2, "test": 3}
    cfg = D.DatasetConfig(mode="baseline", n_train=per["train"], n_val=per["val"], n_test=per["test"], seed=4)
    D.generate_dataset(cfg, tmp_path)
    ds = D.open_dataset(tmp_path)
    levels = [float(v) for v in range(-14, 11, 2)]
    ok = ds.manifest.snr_levels == levels and len(levels) == 13
    for name, n in per.items():
        prov = ds.split(name).provenance
        counts = {lv: int(np.sum(prov["target_snr"] == lv)) for lv in levels}
        ok &= set(np.unique(prov["target_snr"]).tolist()) == set(levels)
        ok &= all(c == n for c in counts.values())
        ok &= bool(np.all(prov["artifact_mask"] == D.mask_of(["AWGN"])))
    acceptance(4, ok, f"13 levels {levels[0]:g}..{levels[-1]:g} dB, per-level counts {per}")
    assert ok


# -- 5 -----------------------------------------------------------------------

def _loops(x, y):
    num = den = 0.0
    peak = 0.0
    vals = list(zip(x.ravel().tolist(), y.ravel().tolist()))
    for a, b in vals:
        num += a * a
        den += (a - b) ** 2
        peak = max(peak, abs(a))
    m = den / len(vals)
    return 10 * np.log10(num / den), 10 * np.log10(peak * peak / m), m


def test_c05_metric_oracles(acceptance, small_dataset):
    rng = np.random.default_rng(5)
    x = rng.standard_normal((1000, 2, 64))
    y = x + rng.standard_normal(x.shape) * rng.uniform(0.01, 3.0, (1000, 1, 1))
    s, p, m = E.snr(x, y), E.psnr(x, y), E.mse(x, y)
    err = 0.0
    for i in range(1000):
        ref = _loops(x[i], y[i])
        err = max(err, abs(s[i] - ref[0]), abs(p[i] - ref[1]), abs(m[i] - ref[2]))
    ident = E.evaluate(None, small_dataset, "test", restorer="identity")
    oracle = E.evaluate(None, small_dataset, "test", restorer="oracle")
    ok = (err < 1e-9 and ident.overall["mean_improvement"] == 0.0
          and np.all(oracle.restored_snr == E.SNR_CAP_DB) and np.all(oracle.psnr == E.SNR_CAP_DB))
    acceptance(5, ok, f"max oracle diff {err:.1e}, identity improvement {ident.overall['mean_improvement']}, "
                      f"oracle SNR {oracle.restored_snr.min():g} dB")
    assert ok


# -- 6 -----------------------------------------------------------------------

def test_c06_parameter_budget(acceptance):
    g, d = count_parameters(Generator()), count_parameters(Discriminator())
    ok = abs(g - 275_520) <= 0.2 * 275_520 and abs(d - 82_610) <= 0.2 * 82_610
    acceptance(6, ok, f"G {g:,} ({g / 275_520 - 1:+.1%}), D {d:,} ({d / 82_610 - 1:+.1%})")
    assert ok


# -- 7 -----------------------------------------------------------------------

def test_c07_overfit(acceptance, tmp_path):
    D.generate_dataset(D.DatasetConfig(n_train=64, n_val=0, n_test=0, seed=0), tmp_path)
    train = D.open_dataset(tmp_path).split("train")
    t0 = time.perf_counter()
    res = T.train(T.TrainConfig(epochs=200, batch_size=64, seed=0), (train, None))
    elapsed = time.perf_counter() - t0
    restored = T.restore(res.generator, train.corrupted)
    imp = E.snr(train.clean, restored) - E.snr(train.clean, train.corrupted)
    mean_imp, frac = float(np.mean(imp)), float(np.mean(imp > 0))
    ok = mean_imp >= 5.0 and elapsed <= 1800
    acceptance(7, ok, f"mean train improvement {mean_imp:.2f} dB ({frac:.1%} improved), {elapsed / 60:.1f} min")
    assert ok


# -- 8 / 9 -------------------------------------------------------------------

GEN_EPOCHS = 100


@pytest.fixture(scope="module")
def desk(tmp_path_factory):
    """2,000-sample BRSR dataset with 200 validation and 500 held-out test samples."""
    root = tmp_path_factory.mktemp("desk")
    D.generate_dataset(D.DatasetConfig(n_train=2000, n_val=200, n_test=500, seed=8), root / "data",
                       workers=D.default_workers())
    return root, D.open_dataset(root / "data")


@pytest.fixture(scope="module")
def first_pass(desk):
    root, ds = desk
    t0 = time.perf_counter()
    res = T.train(T.TrainConfig(epochs=GEN_EPOCHS, seed=8), ds, root / "dual")
    return res, time.perf_counter() - t0


def test_c08_generalization(acceptance, desk, first_pass):
    root, ds = desk
    res, elapsed = first_pass
    rep = E.evaluate(T.best_generator(res), ds, "test")
    time_only = T.train(T.TrainConfig(epochs=GEN_EPOCHS, seed=8, lambda_freq=0.0), ds, root / "time_only")
    rep_t = E.evaluate(T.best_generator(time_only), ds, "test")
    dual, frac = rep.overall["mean_improvement"], rep.overall["frac_improved"]
    ok = dual >= 3.0 and frac >= 0.8
    acceptance(8, ok, f"held-out improvement dual {dual:.2f} dB ({frac:.1%} improved) vs time-only "
                      f"{rep_t.overall['mean_improvement']:.2f} dB ({rep_t.overall['frac_improved']:.1%}); "
                      f"{len(ds.split('train'))} samples x {GEN_EPOCHS} epochs, {elapsed / 60:.0f} min")
    assert ok


def test_c09_cascade(acceptance, desk, first_pass):
    root, ds = desk
    res, _ = first_pass
    first = T.best_generator(res)
    second = T.train_second_pass(first, ds, T.TrainConfig(epochs=GEN_EPOCHS, seed=9), root / "second")
    single = E.evaluate(first, ds, "test")
    cascade = E.evaluate(first, ds, "test", mode="cascade", second=T.best_generator(second))
    s, c = single.overall["mean_restored_snr"], cascade.overall["mean_restored_snr"]
    ok = c >= s - 0.5
    acceptance(9, ok, f"held-out mean SNR cascade {c:.2f} dB vs single {s:.2f} dB ({c - s:+.2f})")
    assert ok


# -- 10 ----------------------------------------------------------------------

def test_c10_determinism(acceptance, tmp_path):
    def files(d, names):
        return [(d / n).read_bytes() for n in names]

    outs = []
    for rep in ("a", "b"):
        d = tmp_path / rep
        data, run, ev = d / "data", d / "run", d / "eval"
        assert cli.run(["dataset-gen", "--seed", "10", "--n-train", "24", "--n-val", "8", "--n-test", "8",
                        "--out", str(data)]) == 0
        assert cli.run(["train", "--dataset", str(data), "--epochs", "2", "--batch-size", "8", "--val-every", "1",
                        "--seed", "10", "--threads", "1", "--out", str(run)]) == 0
        assert cli.run(["eval", "--dataset", str(data), "--checkpoint", str(run / "checkpoints" / "best"),
                        "--timing-batches", "0", "--out", str(ev)]) == 0
        outs.append({
            "dataset-gen": files(data, ["samples.bin", "manifest.json"]),
            "train": files(run, ["metrics.csv", "checkpoints/best/generator.ckpt",
                                 "checkpoints/final/generator.ckpt", "checkpoints/final/discriminator.ckpt",
                                 "checkpoints/final/generator.adam"]),
            "eval": files(ev, ["per_sample.csv", "summary.csv", "histogram.csv"]),
        })
    same = {k: outs[0][k] == outs[1][k] for k in outs[0]}
    ok = all(same.values())
    acceptance(10, ok, ", ".join(f"{k} {'identical' if v else 'DIFFERS'}" for k, v in same.items()))
    assert ok


# -- 11 ----------------------------------------------------------------------

def test_c11_spectrogram(acceptance):
    rng = np.random.default_rng(11)
    n = 64
    k = np.arange(n)
    dft = np.exp(-2j * np.pi * np.outer(k, k) / n)
    cfg = SpectrogramConfig(n_fft=n, hop=16)
    win = cfg.window_array()
    worst = 0.0
    for _ in range(20):
        z = rng.standard_normal(256) + 1j * rng.standard_normal(256)
        got = stft(np.stack([z.real, z.imag]), cfg).data[0]
        got = got[0] + 1j * got[1]
        for f in range(got.shape[0]):
            seg = z[16 * f:16 * f + n] * win
            ref = np.array([sum(seg[m] * dft[kk, m] for m in range(n)) for kk in range(n)])
            worst = max(worst, float(np.max(np.abs(got[f] - ref))))
    x = rng.standard_normal((4, 2, 1024))
    base = spectrogram(x).data
    exact = np.array_equal(spectrogram(4.0 * x).data, base)
    scale_err = max(float(np.max(np.abs(spectrogram(c * x).data - base))) for c in rng.uniform(1e-3, 1e3, 10))
    ok = worst < 1e-6 and exact and scale_err < 1e-9
    acceptance(11, ok, f"max |STFT - naive DFT| {worst:.1e}, scaling max diff {scale_err:.1e}")
    assert ok
