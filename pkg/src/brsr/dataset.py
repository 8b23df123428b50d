"""Artifact models, randomized blind-restoration corruption, and the dataset container.

Corruption of a normalized clean signal ``x`` with power ``P_s``:

1. ``SNR_rand ~ U[snr_min, snr_max]`` dB and ``P_rand = P_s / 10^(SNR_rand / 10)``.
2. A nonempty subset of {AWGN, Echo, Interference}, uniform over the 7 choices.
3. Pseudo-weights ``w~`` from a symmetric Dirichlet(1) over the subset (sum 1).
4. Each component ``a_i`` has measured power ``P_i``; the actual weight is
   ``w_i = w~_i * sqrt(P_rand / P_i)`` and ``x^ = x + sum_i w_i a_i``.

AWGN components are rescaled so their measured power is exactly ``P_rand``.
Echo is a zero-filled right shift by ``tau`` in [128, 512] samples. Interference
is a pool member, circularly shifted by a random offset.

The weights are an amplitude simplex, so a blend of k uncorrelated components
lands ``-10 log10(sum w~^2)`` dB above ``SNR_rand``. Both target and realized
SNRs are recorded.

Container (directory):

``manifest.json``
    UTF-8 JSON with mode, counts, splits, seeds, config, per-sample byte
    offsets and the SHA-256 of the sample file.
``samples.bin``
    16-byte header (``b"BRSD"``, u32 version, u32 count, u32 length), then
    ``count`` fixed-size records. Each record is four little-endian float32
    planes of ``length`` values (clean I, clean Q, corrupted I, corrupted Q)
    followed by the provenance struct :data:`PROVENANCE_DTYPE` (152 bytes,
    packed, little-endian).
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import metrics
from .waveforms import FAMILIES, SIGNAL_LENGTH, ComplexSignal, normalize, synthesize

ARTIFACT_KINDS = ("AWGN", "Echo", "Interference")
# bit i set <=> ARTIFACT_KINDS[i] present; masks 1..7 are the nonempty subsets
SUBSET_MASKS = tuple(range(1, 8))
MODES = ("brsr", "baseline")
SPLITS = ("train", "val", "test")
ECHO_DELAY_RANGE = (128, 512)
POOL_SIZE = 100
FORMAT_VERSION = 1
MAGIC = b"BRSD"
HEADER_SIZE = 16

PROVENANCE_DTYPE = np.dtype([
    ("master_seed", "<u8"),
    ("sample_index", "<u8"),
    ("waveform_seed", "<u8"),
    ("class_id", "<u4"),
    ("mode", "u1"),
    ("split", "u1"),
    ("artifact_mask", "u1"),
    ("_pad", "u1"),
    ("target_snr", "<f8"),
    ("desired_noise_power", "<f8"),
    ("signal_power", "<f8"),
    ("realized_snr", "<f8"),
    ("pseudo_weight", "<f8", (3,)),
    ("actual_weight", "<f8", (3,)),
    ("artifact_power", "<f8", (3,)),
    ("echo_delay", "<i4"),
    ("interference_id", "<i4"),
    ("interference_shift", "<i4"),
    ("snr_level", "<i4"),
])


def record_dtype(length: int = SIGNAL_LENGTH) -> np.dtype:
    return np.dtype([("signals", "<f4", (4, length)), ("prov", PROVENANCE_DTYPE)])


def subset_name(mask: int) -> str:
    return "+".join(k for i, k in enumerate(ARTIFACT_KINDS) if mask >> i & 1)


def mask_of(kinds) -> int:
    mask = 0
    for k in kinds:
        if k not in ARTIFACT_KINDS:
            raise ValueError(f"unknown artifact kind {k!r}")
        mask |= 1 << ARTIFACT_KINDS.index(k)
    return mask


def _as_array(x) -> np.ndarray:
    if isinstance(x, ComplexSignal):
        return x.as_array()
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != 2:
        raise ValueError(f"expected an I/Q array of shape (2, L), got {arr.shape}")
    return arr


def signal_power(x) -> float:
    """Mean of ``I^2 + Q^2`` over the samples."""
    x = _as_array(x)
    return float(np.mean(x[0] ** 2 + x[1] ** 2))


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


# -- artifact models ----------------------------------------------------------

def apply_awgn(x, noise_power: float, seed=None):
    """Add white Gaussian noise of exactly ``noise_power``; returns (corrupted, component)."""
    x = _as_array(x)
    if noise_power < 0:
        raise ValueError("noise power must be non-negative")
    rng = _rng(seed)
    raw = rng.standard_normal(x.shape)
    if noise_power == 0:
        return x.copy(), np.zeros_like(x)
    comp = raw * np.sqrt(noise_power / signal_power(raw))
    return x + comp, comp


def apply_echo(x, delay: int, delay_range=ECHO_DELAY_RANGE) -> np.ndarray:
    """Delayed replica: ``x`` shifted right by ``delay`` samples with zero fill."""
    x = _as_array(x)
    delay = int(delay)
    if not delay_range[0] <= delay <= delay_range[1]:
        raise ValueError(f"echo delay {delay} outside [{delay_range[0]}, {delay_range[1]}]")
    comp = np.zeros_like(x)
    if delay < x.shape[1]:
        comp[:, delay:] = x[:, : x.shape[1] - delay]
    return comp


@lru_cache(maxsize=8)
def _pool_cached(pool_seed: int, size: int, length: int):
    rng = np.random.default_rng([int(pool_seed), 0x9E7])
    pool = []
    for _ in range(size):
        cid = int(rng.integers(len(FAMILIES)))
        pool.append(normalize(synthesize(cid, int(rng.integers(2**63)), length)).as_array())
    arr = np.stack(pool)
    arr.setflags(write=False)
    return arr


def build_interference_pool(pool_seed: int, size: int = POOL_SIZE, length: int = SIGNAL_LENGTH) -> np.ndarray:
    """``size`` normalized waveforms ``(size, 2, L)`` drawn from all families under ``pool_seed``."""
    return _pool_cached(int(pool_seed), int(size), int(length))


def derive_pool_seed(master_seed: int) -> int:
    return int(np.random.SeedSequence([int(master_seed), 0xB0B]).generate_state(1, np.uint64)[0])


# -- corruption ---------------------------------------------------------------

@dataclass
class ArtifactSpec:
    kind: str
    pseudo_weight: float
    actual_weight: float
    power: float
    echo_delay: int | None = None
    interference_id: int | None = None
    interference_shift: int | None = None


@dataclass
class CorruptionRecord:
    clean: np.ndarray
    corrupted: np.ndarray
    target_snr: float
    desired_noise_power: float
    signal_power: float
    artifacts: list
    realized_snr: float
    master_seed: int = 0
    sample_index: int = 0
    class_id: int = -1
    waveform_seed: int = 0
    mode: str = "brsr"
    snr_level: int = -1

    @property
    def artifact_mask(self) -> int:
        return mask_of(a.kind for a in self.artifacts)

    @property
    def subset(self) -> str:
        return subset_name(self.artifact_mask)

    def provenance(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("clean", "corrupted")}
        d["subset"] = self.subset
        return d


@dataclass
class CorruptionConfig:
    snr_min: float = -14.0
    snr_max: float = 10.0
    echo_delay_min: int = ECHO_DELAY_RANGE[0]
    echo_delay_max: int = ECHO_DELAY_RANGE[1]

    def __post_init__(self):
        if self.snr_min > self.snr_max:
            raise ValueError("snr_min must not exceed snr_max")
        lo, hi = ECHO_DELAY_RANGE
        if not lo <= self.echo_delay_min <= self.echo_delay_max <= hi:
            raise ValueError(f"echo delay range must lie within [{lo}, {hi}]")


def corrupt(x, seed, pool=None, config: CorruptionConfig | None = None, *,
            snr_db: float | None = None, kinds=None, pseudo_weights=None) -> CorruptionRecord:
    """Blend randomly chosen artifacts into the normalized clean signal ``x``.

    ``snr_db``, ``kinds`` and ``pseudo_weights`` pin the corresponding random
    draws (the remaining draws still come from ``seed``).
    """
    config = config or CorruptionConfig()
    x = _as_array(x)
    rng = _rng(seed)
    p_s = signal_power(x)
    if p_s <= 0:
        raise ValueError("clean signal has zero power")

    target = float(rng.uniform(config.snr_min, config.snr_max)) if snr_db is None else float(snr_db)
    p_rand = p_s / 10.0 ** (target / 10.0)

    if kinds is None:
        mask = int(rng.choice(SUBSET_MASKS))
        kinds = [k for i, k in enumerate(ARTIFACT_KINDS) if mask >> i & 1]
    else:
        kinds = [k for k in ARTIFACT_KINDS if k in set(kinds)]
        if not kinds:
            raise ValueError("at least one artifact kind is required")
        mask_of(kinds)
    if pseudo_weights is None:
        pw = rng.dirichlet(np.ones(len(kinds))) if len(kinds) > 1 else np.ones(1)
    else:
        pw = np.asarray(pseudo_weights, dtype=np.float64)
        if pw.shape != (len(kinds),) or np.any(pw < 0) or abs(pw.sum() - 1.0) > 1e-9:
            raise ValueError("pseudo weights must be non-negative, one per artifact, summing to 1")

    specs = []
    out = x.copy()
    for kind, w_tilde in zip(kinds, pw):
        extra = {}
        if kind == "AWGN":
            _, comp = apply_awgn(x, p_rand, rng)
        elif kind == "Echo":
            delay = int(rng.integers(config.echo_delay_min, config.echo_delay_max + 1))
            comp = apply_echo(x, delay, (config.echo_delay_min, config.echo_delay_max))
            extra["echo_delay"] = delay
        else:
            if pool is None:
                pool = build_interference_pool(0, length=x.shape[1])
            idx = int(rng.integers(len(pool)))
            shift = int(rng.integers(x.shape[1]))
            comp = np.roll(pool[idx], shift, axis=-1)
            extra["interference_id"] = idx
            extra["interference_shift"] = shift
        p_i = signal_power(comp)
        w = float(w_tilde) * np.sqrt(p_rand / p_i) if p_i > 0 else 0.0
        out += w * comp
        specs.append(ArtifactSpec(kind, float(w_tilde), float(w), p_i, **extra))

    clean32 = x.astype(np.float32)
    corrupted32 = out.astype(np.float32)
    return CorruptionRecord(
        clean=clean32, corrupted=corrupted32, target_snr=target, desired_noise_power=p_rand,
        signal_power=p_s, artifacts=specs, realized_snr=float(metrics.snr(clean32, corrupted32)),
    )


# -- generation ---------------------------------------------------------------

@dataclass
class DatasetConfig:
    """Generation settings. In baseline mode the counts are per SNR level."""

    mode: str = "brsr"
    n_train: int = 800
    n_val: int = 100
    n_test: int = 100
    seed: int = 0
    snr_min: float = -14.0
    snr_max: float = 10.0
    snr_step: float = 2.0
    echo_delay_min: int = ECHO_DELAY_RANGE[0]
    echo_delay_max: int = ECHO_DELAY_RANGE[1]
    pool_size: int = POOL_SIZE
    pool_seed: int | None = None
    length: int = SIGNAL_LENGTH

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("n_train", "n_val", "n_test"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")
        if self.n_train + self.n_val + self.n_test == 0:
            raise ValueError("dataset must contain at least one sample")
        if self.pool_size < 1:
            raise ValueError("pool_size must be positive")
        if self.mode == "baseline" and self.snr_step <= 0:
            raise ValueError("snr_step must be positive")
        self.corruption  # validates ranges

    @property
    def corruption(self) -> CorruptionConfig:
        return CorruptionConfig(self.snr_min, self.snr_max, self.echo_delay_min, self.echo_delay_max)

    @property
    def effective_pool_seed(self) -> int:
        return derive_pool_seed(self.seed) if self.pool_seed is None else int(self.pool_seed)

    def snr_levels(self) -> list:
        n = int(round((self.snr_max - self.snr_min) / self.snr_step))
        return [float(self.snr_min + i * self.snr_step) for i in range(n + 1)]

    def split_counts(self) -> dict:
        per = len(self.snr_levels()) if self.mode == "baseline" else 1
        return {"train": self.n_train * per, "val": self.n_val * per, "test": self.n_test * per}

    def to_dict(self):
        return asdict(self)


def make_sample(config: DatasetConfig, index: int, pool=None) -> CorruptionRecord:
    """Sample ``index`` of the dataset; depends only on ``(config, index)``."""
    rng = np.random.default_rng([int(config.seed), int(index)])
    class_id = int(rng.integers(len(FAMILIES)))
    wseed = int(rng.integers(2**63))
    clean = normalize(synthesize(class_id, wseed, config.length)).as_array()
    if pool is None:
        pool = build_interference_pool(config.effective_pool_seed, config.pool_size, config.length)
    level = -1
    if config.mode == "baseline":
        counts = config.split_counts()
        pos = index
        for name in SPLITS:
            if pos < counts[name]:
                break
            pos -= counts[name]
        levels = config.snr_levels()
        level = pos % len(levels)
        rec = corrupt(clean, rng, pool, config.corruption, snr_db=levels[level], kinds=["AWGN"])
    else:
        rec = corrupt(clean, rng, pool, config.corruption)
    rec.master_seed = int(config.seed)
    rec.sample_index = int(index)
    rec.class_id = class_id
    rec.waveform_seed = wseed
    rec.mode = config.mode
    rec.snr_level = level
    return rec


def _pack(rec: CorruptionRecord, split: int, out) -> None:
    out["signals"][0:2] = rec.clean
    out["signals"][2:4] = rec.corrupted
    p = out["prov"]
    p["master_seed"] = rec.master_seed
    p["sample_index"] = rec.sample_index
    p["waveform_seed"] = rec.waveform_seed
    p["class_id"] = rec.class_id
    p["mode"] = MODES.index(rec.mode)
    p["split"] = split
    p["artifact_mask"] = rec.artifact_mask
    p["target_snr"] = rec.target_snr
    p["desired_noise_power"] = rec.desired_noise_power
    p["signal_power"] = rec.signal_power
    p["realized_snr"] = rec.realized_snr
    p["echo_delay"] = p["interference_id"] = p["interference_shift"] = -1
    for a in rec.artifacts:
        k = ARTIFACT_KINDS.index(a.kind)
        p["pseudo_weight"][k] = a.pseudo_weight
        p["actual_weight"][k] = a.actual_weight
        p["artifact_power"][k] = a.power
        if a.echo_delay is not None:
            p["echo_delay"] = a.echo_delay
        if a.interference_id is not None:
            p["interference_id"] = a.interference_id
            p["interference_shift"] = a.interference_shift
    p["snr_level"] = rec.snr_level


def _split_of(index: int, counts: dict) -> int:
    for i, name in enumerate(SPLITS):
        if index < counts[name]:
            return i
        index -= counts[name]
    raise IndexError(index)


def _build_chunk(args):
    config, start, stop = args
    counts = config.split_counts()
    pool = build_interference_pool(config.effective_pool_seed, config.pool_size, config.length)
    out = np.zeros(stop - start, dtype=record_dtype(config.length))
    for j, idx in enumerate(range(start, stop)):
        _pack(make_sample(config, idx, pool), _split_of(idx, counts), out[j])
    return out


def build_records(config: DatasetConfig, workers: int = 1) -> np.ndarray:
    """All packed records in manifest order; identical for any ``workers``."""
    n = sum(config.split_counts().values())
    if workers <= 1 or n < 2:
        return _build_chunk((config, 0, n))
    step = -(-n // (workers * 4))
    chunks = [(config, s, min(n, s + step)) for s in range(0, n, step)]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return np.concatenate(list(ex.map(_build_chunk, chunks)))


@dataclass
class DatasetManifest:
    format_version: int
    mode: str
    sample_count: int
    splits: dict
    seed: int
    pool_seed: int
    length: int
    header_size: int
    record_size: int
    offsets: list
    samples_file: str
    samples_sha256: str
    config: dict = field(default_factory=dict)
    snr_levels: list | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        return cls(**d)

    def validate(self) -> None:
        starts = [s for s, _ in self.splits.values()]
        total = 0
        for name in SPLITS:
            start, count = self.splits[name]
            if start != total or count < 0:
                raise ValueError("splits must be contiguous, disjoint and ordered train/val/test")
            total += count
        if total != self.sample_count or len(self.offsets) != self.sample_count or min(starts) != 0:
            raise ValueError("splits do not cover the sample count")
        if any(b <= a for a, b in zip(self.offsets, self.offsets[1:])):
            raise ValueError("sample offsets must be strictly increasing")


def generate_dataset(config: DatasetConfig, output_path, workers: int = 1) -> DatasetManifest:
    """Write ``manifest.json`` and ``samples.bin`` under ``output_path``."""
    out_dir = Path(output_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = build_records(config, workers)
    n = records.shape[0]
    header = MAGIC + np.array([FORMAT_VERSION, n, config.length], dtype="<u4").tobytes()
    payload = header + records.tobytes()
    samples = out_dir / "samples.bin"
    samples.write_bytes(payload)

    counts = config.split_counts()
    splits, start = {}, 0
    for name in SPLITS:
        splits[name] = [start, counts[name]]
        start += counts[name]
    size = records.dtype.itemsize
    manifest = DatasetManifest(
        format_version=FORMAT_VERSION, mode=config.mode, sample_count=n, splits=splits,
        seed=int(config.seed), pool_seed=config.effective_pool_seed, length=config.length,
        header_size=HEADER_SIZE, record_size=size,
        offsets=[HEADER_SIZE + i * size for i in range(n)], samples_file=samples.name,
        samples_sha256=hashlib.sha256(payload).hexdigest(), config=config.to_dict(),
        snr_levels=config.snr_levels() if config.mode == "baseline" else None,
    )
    manifest.validate()
    (out_dir / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    return manifest


# -- reading ------------------------------------------------------------------

class TestSplitAccessError(PermissionError):
    """Raised when code restricted to training data reaches for the test split."""

    __test__ = False


@dataclass
class SplitView:
    """One split's signals and provenance. Arrays are float32 ``(N, 2, L)``."""

    name: str
    clean: np.ndarray
    corrupted: np.ndarray
    provenance: np.ndarray
    indices: np.ndarray

    def __len__(self):
        return self.clean.shape[0]

    @property
    def artifact_subsets(self) -> list:
        return [subset_name(int(m)) for m in self.provenance["artifact_mask"]]

    def subset(self, idx) -> "SplitView":
        idx = np.asarray(idx)
        return SplitView(self.name, self.clean[idx], self.corrupted[idx], self.provenance[idx], self.indices[idx])

    def require_training_split(self) -> None:
        if self.name == "test":
            raise TestSplitAccessError("the test split cannot be used for training or model selection")


class BrsrDataset:
    """Reader for a generated dataset directory."""

    def __init__(self, manifest: DatasetManifest, records: np.ndarray, root: Path):
        self.manifest = manifest
        self.records = records
        self.root = root

    @classmethod
    def open(cls, path, verify: bool = True) -> "BrsrDataset":
        root = Path(path)
        text = (root / "manifest.json").read_text(encoding="utf-8")
        try:
            manifest = DatasetManifest.from_dict(json.loads(text))
        except (ValueError, TypeError) as exc:
            raise ValueError(f"cannot read dataset manifest in {root}: {exc}") from exc
        if manifest.format_version != FORMAT_VERSION:
            raise ValueError(f"unsupported dataset format version {manifest.format_version}")
        manifest.validate()
        payload = (root / manifest.samples_file).read_bytes()
        if verify and hashlib.sha256(payload).hexdigest() != manifest.samples_sha256:
            raise ValueError("sample file does not match the manifest hash")
        if payload[:4] != MAGIC:
            raise ValueError("not a dataset sample file")
        version, count, length = np.frombuffer(payload[4:HEADER_SIZE], dtype="<u4")
        if version != FORMAT_VERSION or count != manifest.sample_count or length != manifest.length:
            raise ValueError("sample file header disagrees with the manifest")
        dt = record_dtype(int(length))
        if dt.itemsize != manifest.record_size or len(payload) != HEADER_SIZE + count * dt.itemsize:
            raise ValueError("sample file size disagrees with the manifest")
        records = np.frombuffer(payload, dtype=dt, offset=HEADER_SIZE, count=int(count))
        return cls(manifest, records, root)

    def __len__(self):
        return self.manifest.sample_count

    @property
    def content_hash(self) -> str:
        return self.manifest.samples_sha256

    def split(self, name: str) -> SplitView:
        if name not in SPLITS:
            raise KeyError(f"unknown split {name!r}")
        start, count = self.manifest.splits[name]
        recs = self.records[start:start + count]
        sig = recs["signals"]
        return SplitView(name, sig[:, 0:2], sig[:, 2:4], recs["prov"], np.arange(start, start + count))

    def record(self, index: int) -> CorruptionRecord:
        """Rebuild the full :class:`CorruptionRecord` of one stored sample."""
        if not 0 <= index < len(self):
            raise IndexError(f"sample index {index} out of range [0, {len(self)})")
        r = self.records[index]
        p = r["prov"]
        specs = []
        for k, kind in enumerate(ARTIFACT_KINDS):
            if not int(p["artifact_mask"]) >> k & 1:
                continue
            extra = {}
            if kind == "Echo":
                extra["echo_delay"] = int(p["echo_delay"])
            elif kind == "Interference":
                extra["interference_id"] = int(p["interference_id"])
                extra["interference_shift"] = int(p["interference_shift"])
            specs.append(ArtifactSpec(kind, float(p["pseudo_weight"][k]), float(p["actual_weight"][k]),
                                      float(p["artifact_power"][k]), **extra))
        return CorruptionRecord(
            clean=np.array(r["signals"][0:2]), corrupted=np.array(r["signals"][2:4]),
            target_snr=float(p["target_snr"]), desired_noise_power=float(p["desired_noise_power"]),
            signal_power=float(p["signal_power"]), artifacts=specs, realized_snr=float(p["realized_snr"]),
            master_seed=int(p["master_seed"]), sample_index=int(p["sample_index"]),
            class_id=int(p["class_id"]), waveform_seed=int(p["waveform_seed"]),
            mode=MODES[int(p["mode"])], snr_level=int(p["snr_level"]),
        )


def open_dataset(path, verify: bool = True) -> BrsrDataset:
    return BrsrDataset.open(path, verify)


def default_workers() -> int:
    return max(1, min(4, os.cpu_count() or 1))
