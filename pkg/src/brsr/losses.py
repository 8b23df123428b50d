"""Spectrogram machinery and the dual-domain adversarial objectives."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Tensor
from .autodiff import functional as F


def hann(n: int) -> np.ndarray:
    """Periodic Hann window (symmetric about n/2, nonnegative)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


@dataclass
class SpectrogramConfig:
    n_fft: int = 64
    hop: int = 16
    window: str = "hann"
    floor: float = 1e-12

    def __post_init__(self):
        if not 1 <= self.hop <= self.n_fft:
            raise ValueError(f"hop must be in [1, n_fft], got hop={self.hop}, n_fft={self.n_fft}")
        if self.window not in ("hann", "rect"):
            raise ValueError(f"unknown window {self.window!r}")

    def window_array(self) -> np.ndarray:
        return hann(self.n_fft) if self.window == "hann" else np.ones(self.n_fft)

    def n_frames(self, length: int) -> int:
        return 1 + (length - self.n_fft) // self.hop

    def to_dict(self):
        return asdict(self)


@dataclass
class LossWeights:
    time: float = 100.0
    freq: float = 200.0

    def __post_init__(self):
        if self.time < 0 or self.freq < 0:
            raise ValueError("loss weights must be nonnegative")


def _as_batch(x) -> Tensor:
    if not isinstance(x, Tensor):
        arr = np.asarray(x)
        x = Tensor(arr[None] if arr.ndim == 2 else arr)
    return x


def stft(x, config: SpectrogramConfig | None = None) -> Tensor:
    """Complex STFT frames of ``I + jQ`` as a ``(B, 2, frames, n_fft)`` real/imag tensor."""
    config = config or SpectrogramConfig()
    return F.stft(_as_batch(x), config.window_array(), config.hop)


def power_spectrogram(x, config: SpectrogramConfig | None = None) -> Tensor:
    """``|STFT|^2`` as ``(B, frames, n_fft)``."""
    return F.sum(F.square(stft(x, config)), axis=1)


def spectrogram(x, config: SpectrogramConfig | None = None) -> Tensor:
    """Power spectrogram divided by its per-sample peak bin (floored)."""
    config = config or SpectrogramConfig()
    return F.max_normalize(power_spectrogram(x, config), config.floor)


@dataclass
class GeneratorLoss:
    total: Tensor
    adv: float
    time: float
    freq: float
    components: dict = field(default_factory=dict)


def generator_loss(restored: Tensor, clean, d_score: Tensor, weights: LossWeights | None = None,
                   spec_config: SpectrogramConfig | None = None) -> GeneratorLoss:
    """``(D(x~) - 1)^2 + w_time * L1(x~, x) + w_freq * L1(S(x~), S(x))``.

    Each term is a mean over its elements (and the batch). A zero frequency
    weight skips the spectrogram path entirely (time-only training).
    """
    weights = weights or LossWeights()
    clean = _as_batch(clean)
    if restored.shape != clean.shape:
        raise ValueError(f"shape mismatch: {restored.shape} vs {clean.shape}")
    adv = F.mean(F.square(F.sub(d_score, 1.0)))
    l_time = F.mean(F.abs(F.sub(restored, clean)))
    total = F.add(adv, F.mul(l_time, weights.time))
    freq_val = 0.0
    if weights.freq:
        l_freq = F.mean(F.abs(F.sub(spectrogram(restored, spec_config), spectrogram(clean, spec_config))))
        total = F.add(total, F.mul(l_freq, weights.freq))
        freq_val = l_freq.item()
    return GeneratorLoss(total, adv.item(), l_time.item(), freq_val)


def discriminator_loss(d_real: Tensor, d_fake: Tensor) -> Tensor:
    """Least-squares loss: ``(D(x) - 1)^2 + D(x~)^2``, batch-averaged."""
    return F.add(F.mean(F.square(F.sub(d_real, 1.0))), F.mean(F.square(d_fake)))
