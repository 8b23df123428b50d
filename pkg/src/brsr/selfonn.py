"""Self-ONN generative-neuron layers for 1D signals.

Each kernel element applies a learned Q-term polynomial (no constant term;
the bias absorbs it) to its input sample. With ``Q = 1`` the layer is an
ordinary convolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Module, Parameter, Tensor
from .autodiff import functional as F


@dataclass(frozen=True)
class SelfOnnLayerConfig:
    in_channels: int
    out_channels: int
    kernel_size: int = 3
    q: int = 3
    stride: int = 1
    has_bias: bool = True

    def __post_init__(self):
        if self.q < 1 or self.kernel_size < 1:
            raise ValueError(f"need Q >= 1 and K >= 1, got Q={self.q}, K={self.kernel_size}")
        if self.in_channels < 1 or self.out_channels < 1 or self.stride < 1:
            raise ValueError("channel counts and stride must be positive")

    @property
    def weight_shape(self):
        return (self.out_channels, self.in_channels, self.kernel_size, self.q)


def selfonn_param_count(config: SelfOnnLayerConfig) -> int:
    c = config
    return c.out_channels * c.in_channels * c.kernel_size * c.q + (c.out_channels if c.has_bias else 0)


def selfonn_forward(x: Tensor, config: SelfOnnLayerConfig, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    if tuple(weight.shape) != config.weight_shape:
        raise ValueError(f"weight shape {weight.shape} != {config.weight_shape}")
    return F.selfonn_conv(x, weight, bias if config.has_bias else None, stride=config.stride, padding="same")


def xavier_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype=np.float32):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class SelfOnn1d(Module):
    """Self-ONN layer with weight ``(C_out, C_in, K, Q)`` and optional bias."""

    def __init__(self, config: SelfOnnLayerConfig, rng: np.random.Generator, dtype=np.float32):
        self.config = config
        k, q = config.kernel_size, config.q
        self.weight = Parameter(xavier_uniform(rng, config.weight_shape, config.in_channels * k * q,
                                               config.out_channels * k * q, dtype))
        self.bias = Parameter(np.zeros(config.out_channels, dtype=dtype)) if config.has_bias else None

    def forward(self, x: Tensor) -> Tensor:
        return selfonn_forward(x, self.config, self.weight, self.bias)


class Conv1d(Module):
    """Plain convolution (the linear output head of the generator)."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, rng: np.random.Generator,
                 stride: int = 1, dtype=np.float32):
        self.stride = stride
        fan_in, fan_out = in_channels * kernel_size, out_channels * kernel_size
        self.weight = Parameter(xavier_uniform(rng, (out_channels, in_channels, kernel_size), fan_in, fan_out, dtype))
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return F.conv1d(x, self.weight, self.bias, stride=self.stride, padding="same")
