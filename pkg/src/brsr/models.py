"""Generator (encoder/decoder with skips) and discriminator built from Self-ONN residual blocks."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Module, Parameter, Tensor
from .autodiff import functional as F
from .selfonn import Conv1d, SelfOnn1d, SelfOnnLayerConfig, xavier_uniform


@dataclass
class GeneratorConfig:
    in_channels: int = 2
    encoder_channels: list = field(default_factory=lambda: [16, 24, 32, 64, 96])
    # output width of the last up block (the one at full resolution)
    decoder_out_channels: int = 16
    q: int = 3
    kernel_size: int = 3
    dropout: float = 0.25
    encoder_dropout: list = field(default_factory=lambda: [False, False, False, True, True])
    decoder_dropout: list = field(default_factory=lambda: [True, True, False, False, False])
    skip_mode: str = "concat"
    # scale on the Xavier init of the linear output conv; a small start keeps
    # early outputs near zero so the first updates fit the residual structure
    head_gain: float = 0.1

    def __post_init__(self):
        if len(self.encoder_channels) != 5:
            raise ValueError("generator needs exactly 5 encoder stages")
        if len(self.encoder_dropout) != 5 or len(self.decoder_dropout) != 5:
            raise ValueError("dropout flags need one entry per block")
        if self.skip_mode != "concat":
            raise ValueError("only concatenation skips are supported")

    def to_dict(self):
        return {"kind": "generator", **asdict(self)}


@dataclass
class DiscriminatorConfig:
    in_channels: int = 2
    channels: list = field(default_factory=lambda: [8, 16, 32, 48, 48, 64])
    q: int = 3
    kernel_size: int = 3

    def __post_init__(self):
        if len(self.channels) != 6:
            raise ValueError("discriminator needs exactly 6 down blocks")

    def to_dict(self):
        return {"kind": "discriminator", **asdict(self)}


def config_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind")
    return {"generator": GeneratorConfig, "discriminator": DiscriminatorConfig}[kind](**d)


class _ResBlock(Module):
    """Self-ONN residual unit followed by instance norm and tanh.

    Down blocks resample via stride 2 in both the main and shortcut paths; up
    blocks repeat samples (nearest, x2) before a stride-1 block. The shortcut
    is a 1x1 Self-ONN projection when widths differ, otherwise identity.

    A 1x1 shortcut with the main path's stride samples exactly the positions
    of the main kernel's center tap, so ``main(x) + shortcut(x)`` is evaluated
    as one convolution with the shortcut weight added at the center tap. The
    two weights stay separate parameters.
    """

    def __init__(self, cin, cout, q, k, rng, resample, dropout=0.0, dtype=np.float32):
        stride = 2 if resample == "down" else 1
        self.resample = resample
        self.dropout = dropout
        self.main = SelfOnn1d(SelfOnnLayerConfig(cin, cout, k, q, stride), rng, dtype)
        self.shortcut = SelfOnn1d(SelfOnnLayerConfig(cin, cout, 1, q, stride), rng, dtype) if cin != cout else None

    def forward(self, x: Tensor, rng=None) -> Tensor:
        if self.resample == "up":
            x = F.upsample_nearest(x, 2)
        elif x.shape[-1] % 2:
            raise ValueError(f"down block needs an even input length, got {x.shape[-1]}")
        if self.shortcut is not None:
            main, short = self.main, self.shortcut
            w = main.weight + F.center_embed(short.weight, main.config.kernel_size)
            h = F.selfonn_conv(x, w, main.bias + short.bias, stride=main.config.stride, padding="same")
        else:
            s = F.subsample(x, 2) if self.resample == "down" else x
            h = self.main(x) + s
        h = F.tanh(F.instance_norm(h))
        if self.dropout:
            h = F.dropout(h, self.dropout, self.training, rng)
        return h


class ResDownBlock(_ResBlock):
    def __init__(self, cin, cout, q=3, k=3, rng=None, dropout=0.0, dtype=np.float32):
        super().__init__(cin, cout, q, k, rng, "down", dropout, dtype)


class ResUpBlock(_ResBlock):
    def __init__(self, cin, cout, q=3, k=3, rng=None, dropout=0.0, dtype=np.float32):
        super().__init__(cin, cout, q, k, rng, "up", dropout, dtype)


class Generator(Module):
    """G = decoder(encoder(x)). Every decoder stage output is concatenated with
    the encoder feature map of equal length (the last one with the input itself)
    before entering the next stage; a plain linear convolution maps to 2 channels.
    """

    def __init__(self, config: GeneratorConfig | None = None, seed: int = 0, dtype=np.float32):
        self.config = config = config or GeneratorConfig()
        rng = np.random.default_rng(seed)
        self.rng = np.random.default_rng([seed, 1])
        c, q, k = config.encoder_channels, config.q, config.kernel_size
        widths = [config.in_channels] + list(c)
        self.encoder = [ResDownBlock(widths[i], widths[i + 1], q, k, rng,
                                     config.dropout if config.encoder_dropout[i] else 0.0, dtype)
                        for i in range(5)]
        outs = [c[3], c[2], c[1], c[0], config.decoder_out_channels]
        skips = [c[3], c[2], c[1], c[0], config.in_channels]
        self.decoder = []
        cin = c[4]
        for i in range(5):
            self.decoder.append(ResUpBlock(cin, outs[i], q, k, rng,
                                           config.dropout if config.decoder_dropout[i] else 0.0, dtype))
            cin = outs[i] + skips[i]
        self.head = Conv1d(cin, config.in_channels, k, rng, dtype=dtype)
        self.head.weight.data = self.head.weight.data * np.asarray(config.head_gain, dtype)

    def encode(self, x: Tensor):
        feats = [x]
        h = x
        for blk in self.encoder:
            h = blk(h, self.rng)
            feats.append(h)
        return feats

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[1] != self.config.in_channels or x.shape[-1] % 32:
            raise ValueError(f"generator expects (B, {self.config.in_channels}, L) with L divisible by 32, "
                             f"got {x.shape}")
        feats = self.encode(x)
        h = feats[-1]
        for i, blk in enumerate(self.decoder):
            h = blk(h, self.rng)
            h = F.concat([h, feats[4 - i]], axis=1)
        return self.head(h)


class Discriminator(Module):
    """Six down blocks, global average pooling, and a dense layer to one raw score."""

    def __init__(self, config: DiscriminatorConfig | None = None, seed: int = 0, dtype=np.float32):
        self.config = config = config or DiscriminatorConfig()
        rng = np.random.default_rng(seed)
        widths = [config.in_channels] + list(config.channels)
        self.blocks = [ResDownBlock(widths[i], widths[i + 1], config.q, config.kernel_size, rng, 0.0, dtype)
                       for i in range(6)]
        feat = widths[-1]
        self.fc_weight = Parameter(xavier_uniform(rng, (1, feat), feat, 1, dtype))
        self.fc_bias = Parameter(np.zeros(1, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[1] != self.config.in_channels or x.shape[-1] % 64:
            raise ValueError(f"discriminator expects (B, {self.config.in_channels}, L) with L divisible by 64, "
                             f"got {x.shape}")
        h = x
        for blk in self.blocks:
            h = blk(h)
        return F.dense(F.adaptive_avg_pool(h), self.fc_weight, self.fc_bias)


def count_parameters(model: Module) -> int:
    return model.num_parameters()
