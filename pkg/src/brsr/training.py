"""Alternating adversarial training, checkpoints, restoration and the two-pass cascade.

Each iteration updates the generator first (adversarial + time L1 + spectrogram
L1), recomputes the restoration with the updated generator, then updates the
discriminator on that fresh restoration. Validation SNR is measured every
``val_every`` epochs; the generator with the best value is kept.

Run directory::

    config.json          effective TrainConfig
    run_manifest.json    seeds, dataset hash, parameter counts, backend
    metrics.csv          epoch,L_G_adv,L_G_time,L_G_freq,L_D,val_SNR
    timing.csv           epoch,seconds,rng_digest
    checkpoints/best/    generator at the best validation SNR
    checkpoints/final/   generator + discriminator with optimizer state
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels, metrics
from .autodiff import Adam, NonFiniteError, Tensor, checkpoint, no_grad
from .dataset import (HEADER_SIZE, MAGIC, SPLITS, BrsrDataset, DatasetManifest, SplitView,
                      FORMAT_VERSION, open_dataset)
from .losses import LossWeights, SpectrogramConfig, discriminator_loss, generator_loss
from .models import Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, config_from_dict
from .waveforms import normalize_array

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("epoch", "L_G_adv", "L_G_time", "L_G_freq", "L_D", "val_SNR")


class TrainingDivergedError(RuntimeError):
    """A loss or activation became non-finite."""


@dataclass
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 64
    lr_g: float = 5e-4
    lr_d: float = 5e-4
    lambda_time: float = 100.0
    lambda_freq: float = 200.0
    q_order: int = 3
    seed: int = 0
    val_every: int = 5
    checkpoint_every: int = 0
    clip_norm: float | None = None
    max_train_samples: int | None = None
    max_val_samples: int | None = None
    n_fft: int = 64
    hop: int = 16
    dataset: str = ""
    out_dir: str = ""

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ValueError("learning rates must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.val_every < 1:
            raise ValueError("val_every must be at least 1")
        if self.q_order < 1:
            raise ValueError("q_order must be at least 1")
        LossWeights(self.lambda_time, self.lambda_freq)
        SpectrogramConfig(self.n_fft, self.hop)

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda_time, self.lambda_freq)

    @property
    def spectrogram(self) -> SpectrogramConfig:
        return SpectrogramConfig(self.n_fft, self.hop)

    def seeds(self) -> dict:
        names = ("generator", "discriminator", "shuffle")
        return {n: derive_seed(self.seed, i) for i, n in enumerate(names)}

    def to_dict(self):
        return asdict(self)


def derive_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(stream)]).generate_state(1, np.uint32)[0])


@dataclass
class TrainRunRecord:
    epochs: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    rng_digests: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_snr: float = float("-inf")

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for row in self.epochs:
            w.writerow([row["epoch"]] + [_fmt(row[c]) for c in METRIC_COLUMNS[1:]])
        return buf.getvalue()

    def timing_csv(self) -> str:
        lines = ["epoch,seconds,rng_digest"]
        lines += [f"{i},{s:.3f},{d}" for i, (s, d) in enumerate(zip(self.seconds, self.rng_digests))]
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    return "" if v is None or (isinstance(v, float) and np.isnan(v)) else repr(float(v))


@dataclass
class TrainResult:
    generator: Generator
    discriminator: Discriminator
    record: TrainRunRecord
    out_dir: Path | None
    best_state: dict


# -- data ---------------------------------------------------------------------

def model_inputs(corrupted: np.ndarray) -> np.ndarray:
    """Per-channel max-abs normalization applied at the generator input."""
    return normalize_array(np.asarray(corrupted, dtype=np.float64))[0].astype(np.float32)


def _training_views(dataset, config: TrainConfig):
    if isinstance(dataset, (str, Path)):
        dataset = open_dataset(dataset)
    if isinstance(dataset, BrsrDataset):
        train, val = dataset.split("train"), dataset.split("val")
    else:
        train, val = dataset
    for v in (train, val):
        if v is not None:
            v.require_training_split()
    if config.max_train_samples is not None:
        train = train.subset(np.arange(min(len(train), config.max_train_samples)))
    if val is not None and config.max_val_samples is not None:
        val = val.subset(np.arange(min(len(val), config.max_val_samples)))
    if len(train) == 0:
        raise ValueError("training split is empty")
    return train, (val if val is not None and len(val) else None)


def _digest(rng: np.random.Generator) -> str:
    state = json.dumps(rng.bit_generator.state, sort_keys=True, default=str)
    return hashlib.sha256(state.encode()).hexdigest()[:16]


# -- checkpoints --------------------------------------------------------------

def save_model(model, directory, name: str, meta: dict | None = None, optimizer: Adam | None = None) -> None:
    """Write ``name.ckpt`` (weights), ``name.json`` (architecture) and optionally ``name.adam``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = [n for n, _ in model.named_parameters()]
    checkpoint.save(d / f"{name}.ckpt", dict(model.state_dict()))
    sidecar = {"format_version": 1, "architecture": model.config.to_dict(), "meta": meta or {}}
    (d / f"{name}.json").write_text(json.dumps(sidecar, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    if optimizer is not None:
        checkpoint.save(d / f"{name}.adam", optimizer.state_arrays(names))


def load_model(directory, name: str = "generator"):
    d = Path(directory)
    try:
        sidecar = json.loads((d / f"{name}.json").read_text(encoding="utf-8"))
    except OSError as exc:
        raise checkpoint.CheckpointError(f"missing {name}.json in {d}") from exc
    if sidecar.get("format_version") != 1:
        raise checkpoint.CheckpointError(f"unsupported checkpoint sidecar version {sidecar.get('format_version')}")
    cfg = config_from_dict(sidecar["architecture"])
    cls = Generator if isinstance(cfg, GeneratorConfig) else Discriminator
    model = cls(cfg)
    try:
        model.load_state_dict(checkpoint.load(d / f"{name}.ckpt"))
    except (KeyError, ValueError) as exc:
        raise checkpoint.CheckpointError(f"checkpoint in {d} does not match its architecture: {exc}") from exc
    model.meta = sidecar.get("meta", {})
    return model.eval()


def load_generator(ckpt) -> Generator:
    if isinstance(ckpt, Generator):
        return ckpt
    return load_model(ckpt, "generator")


# -- restoration --------------------------------------------------------------

def restore(ckpt, signals, batch_size: int = 64) -> np.ndarray:
    """Run the generator in eval mode on normalized ``(N, 2, L)`` or ``(2, L)`` signals."""
    gen = load_generator(ckpt)
    x = np.asarray(signals)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[1] != gen.config.in_channels:
        raise ValueError(f"expected signals of shape (N, {gen.config.in_channels}, L), got {np.shape(signals)}")
    if x.shape[-1] % 32:
        raise ValueError(f"signal length must be divisible by 32, got {x.shape[-1]}")
    was_training = gen.training
    gen.eval()
    out = np.empty(x.shape, dtype=np.float32)
    try:
        with no_grad():
            for s in range(0, x.shape[0], batch_size):
                inp = model_inputs(x[s:s + batch_size]).astype(gen.encoder[0].main.weight.dtype)
                out[s:s + batch_size] = gen(Tensor(inp)).data
    finally:
        gen.train(was_training)
    return out[0] if single else out


def restore_cascade(first, second, signals, batch_size: int = 64) -> np.ndarray:
    return restore(second, restore(first, signals, batch_size), batch_size)


def validation_snr(gen: Generator, val: SplitView, batch_size: int = 64) -> float:
    restored = restore(gen, val.corrupted, batch_size)
    return float(np.mean(metrics.snr(val.clean, restored)))


# -- training -----------------------------------------------------------------

def _iteration(G, D, opt_g, opt_d, x_in, x_clean, config):
    x_hat = G(x_in)
    with D.frozen():
        lg = generator_loss(x_hat, x_clean, D(x_hat), config.weights, config.spectrogram)
        if not np.isfinite(lg.total.data).all():
            raise TrainingDivergedError(f"non-finite generator loss (adv={lg.adv}, time={lg.time}, freq={lg.freq})")
        lg.total.backward()
    opt_g.step()
    g_vals = (lg.adv, lg.time, lg.freq)
    del x_hat, lg

    with no_grad():
        x_hat = G(x_in)
    ld = discriminator_loss(D(x_clean), D(Tensor(x_hat.data)))
    if not np.isfinite(ld.data).all():
        raise TrainingDivergedError(f"non-finite discriminator loss {ld.data}")
    opt_d.zero_grad()
    ld.backward()
    opt_d.step()
    return (*g_vals, ld.item())


def train(config: TrainConfig, dataset=None, out_dir=None, progress=None) -> TrainResult:
    """Train a generator/discriminator pair on the train split of ``dataset``."""
    dataset = dataset if dataset is not None else config.dataset
    if isinstance(dataset, (str, Path)):
        dataset = open_dataset(dataset)
    train_view, val_view = _training_views(dataset, config)
    out = Path(out_dir or config.out_dir) if (out_dir or config.out_dir) else None
    seeds = config.seeds()
    G = Generator(GeneratorConfig(q=config.q_order), seed=seeds["generator"])
    D = Discriminator(DiscriminatorConfig(q=config.q_order), seed=seeds["discriminator"])
    opt_g = Adam(G.parameters(), config.lr_g, clip_norm=config.clip_norm)
    opt_d = Adam(D.parameters(), config.lr_d, clip_norm=config.clip_norm)
    shuffle = np.random.default_rng(seeds["shuffle"])

    x_in_all = model_inputs(train_view.corrupted)
    x_clean_all = np.ascontiguousarray(train_view.clean, dtype=np.float32)
    n = len(train_view)
    record = TrainRunRecord()
    best_state = {k: v.copy() for k, v in G.state_dict().items()}

    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(json.dumps(config.to_dict(), indent=1, sort_keys=True) + "\n")
        manifest = {
            "seeds": {"master": config.seed, **seeds},
            "dataset_hash": dataset.content_hash if isinstance(dataset, BrsrDataset) else None,
            "train_samples": n,
            "val_samples": 0 if val_view is None else len(val_view),
            "generator_parameters": G.num_parameters(),
            "discriminator_parameters": D.num_parameters(),
            "kernel_backend": _kernels.BACKEND,
        }
        (out / "run_manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")

    G.train()
    D.train()
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = shuffle.permutation(n)
        sums = np.zeros(4)
        n_iter = 0
        for s in range(0, n, config.batch_size):
            idx = np.sort(order[s:s + config.batch_size])
            try:
                vals = _iteration(G, D, opt_g, opt_d, Tensor(x_in_all[idx]), Tensor(x_clean_all[idx]), config)
            except NonFiniteError as exc:
                raise TrainingDivergedError(f"epoch {epoch}, batch {n_iter}: {exc}") from exc
            except TrainingDivergedError as exc:
                raise TrainingDivergedError(f"epoch {epoch}, batch {n_iter}: {exc}") from exc
            sums += vals
            n_iter += 1
        row = dict(zip(METRIC_COLUMNS[1:5], sums / n_iter))
        row["epoch"] = epoch
        row["val_SNR"] = None
        last = epoch == config.epochs - 1
        if (epoch + 1) % config.val_every == 0 or last:
            view = val_view if val_view is not None else train_view
            row["val_SNR"] = validation_snr(G, view, config.batch_size)
            G.train()
            if row["val_SNR"] > record.best_val_snr:
                record.best_val_snr = row["val_SNR"]
                record.best_epoch = epoch
                best_state = {k: v.copy() for k, v in G.state_dict().items()}
                if out is not None:
                    save_model(G, out / "checkpoints" / "best", "generator",
                               {"epoch": epoch, "val_snr": row["val_SNR"]})
        record.epochs.append(row)
        record.seconds.append(time.perf_counter() - t0)
        record.rng_digests.append(_digest(shuffle))
        if out is not None:
            (out / "metrics.csv").write_text(record.metrics_csv())
            (out / "timing.csv").write_text(record.timing_csv())
            if config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
                save_model(G, out / "checkpoints" / f"epoch_{epoch:04d}", "generator", {"epoch": epoch})
        msg = (f"epoch {epoch}: L_G_adv={row['L_G_adv']:.4f} L_G_time={row['L_G_time']:.4f} "
               f"L_G_freq={row['L_G_freq']:.4f} L_D={row['L_D']:.4f}")
        if row["val_SNR"] is not None:
            msg += f" val_SNR={row['val_SNR']:.3f} dB"
        log.info(msg)
        if progress is not None:
            progress(row)

    if out is not None:
        final = out / "checkpoints" / "final"
        save_model(G, final, "generator", {"epoch": config.epochs - 1}, opt_g)
        save_model(D, final, "discriminator", {"epoch": config.epochs - 1}, opt_d)
        if record.best_epoch < 0:
            save_model(G, out / "checkpoints" / "best", "generator", {"epoch": -1})
    return TrainResult(G, D, record, out, best_state)


def best_generator(result: TrainResult) -> Generator:
    """A generator holding the best-validation weights of ``result``."""
    G = Generator(result.generator.config)
    G.load_state_dict(result.best_state)
    return G.eval()


# -- second pass --------------------------------------------------------------

def derive_second_pass_dataset(first, dataset, out_path, batch_size: int = 64) -> BrsrDataset:
    """Replace the corrupted signals of the train/val splits by first-pass restorations.

    The container keeps the original provenance; ``realized_snr`` becomes the
    first-pass output SNR. The test split is not carried over.
    """
    ds = dataset if isinstance(dataset, BrsrDataset) else open_dataset(dataset)
    first = load_generator(first)
    n = ds.manifest.splits["train"][1] + ds.manifest.splits["val"][1]
    recs = np.array(ds.records[:n])
    restored = restore(first, recs["signals"][:, 2:4], batch_size)
    recs["signals"][:, 2:4] = restored
    recs["prov"]["realized_snr"] = metrics.snr(recs["signals"][:, 0:2], restored)
    payload = MAGIC + np.array([FORMAT_VERSION, n, ds.manifest.length], dtype="<u4").tobytes() + recs.tobytes()
    root = Path(out_path)
    root.mkdir(parents=True, exist_ok=True)
    (root / "samples.bin").write_bytes(payload)
    m = ds.manifest
    splits = {"train": list(m.splits["train"]), "val": list(m.splits["val"]), "test": [n, 0]}
    size = recs.dtype.itemsize
    cfg = dict(m.config, derived_from=m.samples_sha256)
    manifest = DatasetManifest(
        format_version=FORMAT_VERSION, mode=m.mode, sample_count=n, splits=splits, seed=m.seed,
        pool_seed=m.pool_seed, length=m.length, header_size=HEADER_SIZE, record_size=size,
        offsets=[HEADER_SIZE + i * size for i in range(n)], samples_file="samples.bin",
        samples_sha256=hashlib.sha256(payload).hexdigest(), config=cfg, snr_levels=m.snr_levels,
    )
    manifest.validate()
    (root / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    return open_dataset(root)


def train_second_pass(first, dataset, config: TrainConfig, out_dir=None) -> TrainResult:
    """Train a fresh model on first-pass restorations paired with the clean targets."""
    out = Path(out_dir or config.out_dir) if (out_dir or config.out_dir) else None
    if out is not None:
        derived = derive_second_pass_dataset(first, dataset, out / "second_pass_data", config.batch_size)
    else:
        import tempfile

        with tempfile.TemporaryDirectory() as tmp:
            derived = derive_second_pass_dataset(first, dataset, tmp, config.batch_size)
            derived.records = np.array(derived.records)
    return train(config, derived, out)


__all__ = [
    "TrainConfig", "TrainRunRecord", "TrainResult", "TrainingDivergedError", "train", "restore",
    "restore_cascade", "train_second_pass", "derive_second_pass_dataset", "save_model", "load_model",
    "load_generator", "best_generator", "validation_snr", "model_inputs", "SPLITS",
]
