"""Parametric synthesis of clean complex radar modulation segments.

Twelve LPI waveform families, each a unit-amplitude complex envelope
``exp(j * phase[n])`` of ``L = 1024`` samples (sampling rate normalized to 1):

====  ========  ==========================================================
id    family    parameters drawn per seed
====  ========  ==========================================================
0     LFM       carrier fc, sweep bandwidth B, sweep direction
1     Costas    Welch Costas sequence from prime p in {5, 7, 11}, fc, B
2     BPSK      Barker-13 phase code on carrier fc
3     Frank     M in 4..8 (M^2 chips), fc
4     P1        M in 4..8, fc
5     P2        M in {4, 6, 8}, fc
6     P3        Nc in 16..64 chips, fc
7     P4        Nc in 16..64 chips, fc
8-11  T1-T4     k in 3..6 segments, n in 2..8 phase states, fc (T3/T4: B)
====  ========  ==========================================================

``fc`` is uniform in [0.1, 0.4] and ``B`` in [0.05, 0.3] (cycles/sample);
``B`` is shrunk when needed so that ``fc + B/2 <= 0.45``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FAMILIES = ("LFM", "Costas", "BPSK", "Frank", "P1", "P2", "P3", "P4", "T1", "T2", "T3", "T4")
SIGNAL_LENGTH = 1024
BARKER13 = np.array([1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1])
CARRIER_RANGE = (0.1, 0.4)
BANDWIDTH_RANGE = (0.05, 0.3)
MAX_FREQ = 0.45

_PRIMITIVE_ROOTS = {5: 2, 7: 3, 11: 2}


@dataclass
class ComplexSignal:
    """One I/Q radar segment."""

    i: np.ndarray
    q: np.ndarray
    label: int = -1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.i = np.asarray(self.i, dtype=np.float64)
        self.q = np.asarray(self.q, dtype=np.float64)
        if self.i.shape != self.q.shape or self.i.ndim != 1:
            raise ValueError("I and Q channels must be 1-D arrays of equal length")
        if not (np.isfinite(self.i).all() and np.isfinite(self.q).all()):
            raise ValueError("signal channels must be finite")

    @property
    def length(self) -> int:
        return self.i.shape[0]

    def as_array(self) -> np.ndarray:
        return np.stack([self.i, self.q])

    @classmethod
    def from_array(cls, arr, label: int = -1, meta=None) -> "ComplexSignal":
        arr = np.asarray(arr)
        return cls(arr[0], arr[1], label, dict(meta or {}))

    @classmethod
    def from_complex(cls, z, label: int = -1, meta=None) -> "ComplexSignal":
        return cls(z.real, z.imag, label, dict(meta or {}))

    def to_complex(self) -> np.ndarray:
        return self.i + 1j * self.q


def normalize(signal: ComplexSignal) -> ComplexSignal:
    """Divide each channel by its own absolute maximum; zero channels pass through."""
    chans = []
    for ch in (signal.i, signal.q):
        peak = np.max(np.abs(ch)) if ch.size else 0.0
        chans.append(ch / peak if peak > 0 else ch.copy())
    return ComplexSignal(chans[0], chans[1], signal.label, dict(signal.meta))


def normalize_array(x: np.ndarray):
    """Per-channel max-abs normalization of ``(..., C, L)`` arrays; returns (normalized, scales)."""
    peak = np.max(np.abs(x), axis=-1, keepdims=True)
    scale = np.where(peak > 0, peak, 1.0)
    return x / scale, scale


# -- phase codes --------------------------------------------------------------

def _chip_index(length: int, n_chips: int) -> np.ndarray:
    return (np.arange(length) * n_chips) // length


def _carrier(length: int, fc: float) -> np.ndarray:
    return 2.0 * np.pi * fc * np.arange(length)


def lfm(length: int, fc: float, bandwidth: float, up: bool = True) -> np.ndarray:
    """Linear chirp centred on ``fc`` sweeping ``bandwidth`` over the segment."""
    n = np.arange(length)
    f0 = fc - bandwidth / 2 if up else fc + bandwidth / 2
    rate = (bandwidth if up else -bandwidth) / length
    return 2.0 * np.pi * (f0 * n + 0.5 * rate * n * n)


def costas_sequence(p: int) -> np.ndarray:
    """Welch construction: ``a_i = g^i mod p`` for i = 1..p-1 (values 1..p-1)."""
    g = _PRIMITIVE_ROOTS[p]
    return np.array([pow(g, i, p) for i in range(1, p)])


def costas(length: int, fc: float, bandwidth: float, p: int) -> np.ndarray:
    seq = costas_sequence(p)
    n_hops = seq.size
    df = bandwidth / n_hops
    freqs = fc - bandwidth / 2 + (seq - 1) * df
    chip = _chip_index(length, n_hops)
    # integrate frequency so the phase stays continuous across hops
    inst = freqs[chip]
    return 2.0 * np.pi * np.concatenate([[0.0], np.cumsum(inst[:-1])])


def bpsk_barker(length: int, fc: float) -> np.ndarray:
    code = np.where(BARKER13 > 0, 0.0, np.pi)
    return _carrier(length, fc) + code[_chip_index(length, 13)]


def frank_phases(m: int) -> np.ndarray:
    i, j = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    return (2.0 * np.pi / m * i * j).ravel()


def p1_phases(m: int) -> np.ndarray:
    i, j = np.meshgrid(np.arange(1, m + 1), np.arange(1, m + 1), indexing="ij")
    return (-np.pi / m * (m - (2 * j - 1)) * ((j - 1) * m + (i - 1))).ravel()


def p2_phases(m: int) -> np.ndarray:
    i, j = np.meshgrid(np.arange(1, m + 1), np.arange(1, m + 1), indexing="ij")
    return ((np.pi / 2 * (m - 1) / m - np.pi / m * (i - 1)) * (m + 1 - 2 * j)).ravel()


def p3_phases(nc: int) -> np.ndarray:
    i = np.arange(nc)
    return np.pi * i * i / nc


def p4_phases(nc: int) -> np.ndarray:
    i = np.arange(nc)
    return np.pi * i * i / nc - np.pi * i


def _coded(length: int, fc: float, phases: np.ndarray) -> np.ndarray:
    return _carrier(length, fc) + phases[_chip_index(length, phases.size)]


def t_code(kind: int, length: int, fc: float, k: int, n_states: int, bandwidth: float) -> np.ndarray:
    """Time-varying polyphase codes T1..T4 with ``n_states`` quantized phase levels."""
    t = np.arange(length, dtype=np.float64)
    period = float(length)
    if kind in (1, 2):
        j = np.floor(k * t / period)
        if kind == 1:
            raw = (k * t - j * period) * (j * n_states / period)
        else:
            raw = (k * t - j * period) * ((2 * j - k + 1) / period) * (n_states / 2)
    else:
        raw = n_states * bandwidth * t * t / (2 * period)
        if kind == 4:
            raw = raw - n_states * bandwidth * t / 2
    phase = np.mod(2.0 * np.pi / n_states * np.floor(raw), 2.0 * np.pi)
    return _carrier(length, fc) + phase


# -- synthesis ----------------------------------------------------------------

def _draw_band(rng: np.random.Generator):
    fc = rng.uniform(*CARRIER_RANGE)
    bw = rng.uniform(*BANDWIDTH_RANGE)
    bw = min(bw, 2.0 * (MAX_FREQ - fc))
    return fc, bw


def synthesize(class_id: int, seed: int, length: int = SIGNAL_LENGTH, **overrides) -> ComplexSignal:
    """Deterministic unit-amplitude waveform of family ``class_id`` for ``seed``.

    ``overrides`` replace drawn parameters by name (``fc``, ``bandwidth``,
    ``up``, ``p``, ``m``, ``nc``, ``k``, ``n_states``).
    """
    if not 0 <= int(class_id) < len(FAMILIES):
        raise ValueError(f"unknown class id {class_id}; expected 0..{len(FAMILIES) - 1}")
    class_id = int(class_id)
    rng = np.random.default_rng([int(seed), class_id])
    fc, bw = _draw_band(rng)
    params = {"fc": fc, "bandwidth": bw}
    name = FAMILIES[class_id]
    if name == "LFM":
        params["up"] = bool(rng.integers(2))
    elif name == "Costas":
        params["p"] = int(rng.choice([5, 7, 11]))
    elif name in ("Frank", "P1"):
        params["m"] = int(rng.integers(4, 9))
    elif name == "P2":
        params["m"] = int(rng.choice([4, 6, 8]))
    elif name in ("P3", "P4"):
        params["nc"] = int(rng.integers(16, 65))
    elif name.startswith("T"):
        params["k"] = int(rng.integers(3, 7))
        params["n_states"] = int(rng.integers(2, 9))
    unknown = set(overrides) - set(params)
    if unknown:
        raise ValueError(f"{name}: unknown parameter overrides {sorted(unknown)}")
    params.update(overrides)
    fc, bw = params["fc"], params["bandwidth"]

    if name == "LFM":
        phase = lfm(length, fc, bw, params["up"])
    elif name == "Costas":
        phase = costas(length, fc, bw, params["p"])
    elif name == "BPSK":
        phase = bpsk_barker(length, fc)
    elif name == "Frank":
        phase = _coded(length, fc, frank_phases(params["m"]))
    elif name == "P1":
        phase = _coded(length, fc, p1_phases(params["m"]))
    elif name == "P2":
        phase = _coded(length, fc, p2_phases(params["m"]))
    elif name == "P3":
        phase = _coded(length, fc, p3_phases(params["nc"]))
    elif name == "P4":
        phase = _coded(length, fc, p4_phases(params["nc"]))
    else:
        phase = t_code(int(name[1]), length, fc, params["k"], params["n_states"], bw)

    meta = {"family": name, "seed": int(seed), **params}
    return ComplexSignal(np.cos(phase), np.sin(phase), class_id, meta)
