"""Context-encoder generator and grid discriminator.

The generator downsamples a masked ``3 x S x S`` image with stride-2 4x4
convolutions to a small bottleneck and mirrors the chain back up with
transposed convolutions. The discriminator is fully convolutional and emits an
``S/8 x S/8`` grid of unbounded realism scores.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
from torch import nn

from outpainter.errors import ConfigError, ShapeError


@dataclass(frozen=True)
class GeneratorConfig:
    input_size: int = 192
    encoder_channels: tuple[int, ...] = (64, 64, 128, 256, 512)
    bottleneck_channels: int = 4000
    kernel: int = 4
    leaky_slope: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "encoder_channels", tuple(int(c) for c in self.encoder_channels))
        if not self.encoder_channels or min(self.encoder_channels) < 1 or self.bottleneck_channels < 1:
            raise ConfigError(f"channel counts must be positive: {self}")
        if self.kernel < 2 or self.kernel % 2:
            raise ConfigError(f"generator kernel must be even and >= 2, got {self.kernel}")
        if self.input_size % self.downsampling != 0:
            raise ConfigError(
                f"generator input_size {self.input_size} must be divisible by {self.downsampling} "
                f"({self.num_downsamples} stride-2 layers)"
            )

    @property
    def num_downsamples(self) -> int:
        return len(self.encoder_channels) + 1

    @property
    def downsampling(self) -> int:
        return 2**self.num_downsamples

    @property
    def bottleneck_size(self) -> int:
        return self.input_size // self.downsampling

    @classmethod
    def small(cls) -> "GeneratorConfig":
        """Desk-scale variant: 96 px input, halved widths, 1000-channel bottleneck.

        One encoder level is dropped so the bottleneck stays at 3x3.
        """
        return cls(input_size=96, encoder_channels=(32, 32, 64, 128), bottleneck_channels=1000)

    @classmethod
    def mini(cls) -> "GeneratorConfig":
        return cls(input_size=16, encoder_channels=(4, 4, 8), bottleneck_channels=16)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder_channels"] = list(self.encoder_channels)
        return d


@dataclass(frozen=True)
class DiscriminatorConfig:
    input_size: int = 192
    channels: tuple[int, ...] = (64, 128, 256, 512, 1)
    kernel: int = 3
    strides: tuple[int, ...] = (2, 2, 2, 1, 1)
    leaky_slope: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))
        if len(self.channels) != len(self.strides) or len(self.channels) < 2:
            raise ConfigError("discriminator channels and strides must have equal length >= 2")
        if self.channels[-1] != 1:
            raise ConfigError(f"discriminator must end in 1 channel, got {self.channels[-1]}")
        if min(self.channels) < 1 or any(s not in (1, 2) for s in self.strides):
            raise ConfigError(f"invalid discriminator layout: {self}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError(f"discriminator kernel must be odd, got {self.kernel}")
        if self.input_size % self.downsampling != 0:
            raise ConfigError(
                f"discriminator input_size {self.input_size} must be divisible by {self.downsampling}"
            )

    @property
    def downsampling(self) -> int:
        return 2 ** sum(1 for s in self.strides if s == 2)

    @property
    def grid_size(self) -> int:
        return self.input_size // self.downsampling

    @classmethod
    def small(cls) -> "DiscriminatorConfig":
        return cls(input_size=96, channels=(32, 64, 128, 256, 1))

    @classmethod
    def mini(cls) -> "DiscriminatorConfig":
        return cls(input_size=16, channels=(4, 8, 8, 8, 1))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        d["strides"] = list(self.strides)
        return d


def _check_input(x: torch.Tensor, size: int) -> None:
    expected = (3, size, size)
    if x.dim() != 4 or tuple(x.shape[1:]) != expected:
        raise ShapeError(f"expected input of shape (N, {3}, {size}, {size}), got {tuple(x.shape)}")


def init_weights(module: nn.Module, seed: int, std: float = 0.02) -> None:
    """Seeded N(0, std) conv weights, zero biases, unit/zero norm affine params."""
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                m.weight.copy_(torch.randn(m.weight.shape, generator=gen) * std)
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, (nn.BatchNorm2d, nn.InstanceNorm2d)) and m.affine:
                m.weight.fill_(1.0)
                m.bias.zero_()


class _Staged(nn.Module):
    """A stack of blocks whose intermediate activations can be inspected."""

    role = ""
    blocks: nn.ModuleList

    def forward(self, x):
        _check_input(x, self.config.input_size)
        for block in self.blocks:
            x = block(x)
        return x

    def activations(self, x) -> list[torch.Tensor]:
        _check_input(x, self.config.input_size)
        outs = []
        for block in self.blocks:
            x = block(x)
            outs.append(x)
        return outs

    def activation_shapes(self, batch: int = 1) -> list[tuple[int, int, int]]:
        """``(H, W, C)`` after every block for a zero input."""
        was_training = self.training
        self.eval()
        try:
            with torch.no_grad():
                x = torch.zeros(batch, 3, self.config.input_size, self.config.input_size)
                return [(a.shape[2], a.shape[3], a.shape[1]) for a in self.activations(x)]
        finally:
            self.train(was_training)

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())


class Generator(_Staged):
    role = "generator"

    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        k, pad, slope = config.kernel, (config.kernel - 2) // 2, config.leaky_slope
        blocks = []
        c_in = 3
        for i, c in enumerate(config.encoder_channels):
            layers = [nn.Conv2d(c_in, c, k, 2, pad)]
            if i > 0:
                layers.append(nn.BatchNorm2d(c))
            layers.append(nn.LeakyReLU(slope))
            blocks.append(nn.Sequential(*layers))
            c_in = c
        blocks.append(nn.Sequential(nn.Conv2d(c_in, config.bottleneck_channels, k, 2, pad)))
        c_in = config.bottleneck_channels
        for c in reversed(config.encoder_channels):
            blocks.append(nn.Sequential(nn.ConvTranspose2d(c_in, c, k, 2, pad), nn.BatchNorm2d(c), nn.ReLU()))
            c_in = c
        blocks.append(nn.Sequential(nn.ConvTranspose2d(c_in, 3, k, 2, pad), nn.BatchNorm2d(3), nn.Tanh()))
        self.blocks = nn.ModuleList(blocks)


class Discriminator(_Staged):
    role = "discriminator"

    def __init__(self, config: DiscriminatorConfig):
        super().__init__()
        self.config = config
        k, pad, slope = config.kernel, config.kernel // 2, config.leaky_slope
        blocks = []
        c_in = 3
        last = len(config.channels) - 1
        for i, (c, s) in enumerate(zip(config.channels, config.strides)):
            layers = [nn.Conv2d(c_in, c, k, s, pad)]
            if i != last:
                if i > 0:
                    layers.append(nn.InstanceNorm2d(c))
                layers.append(nn.LeakyReLU(slope))
            blocks.append(nn.Sequential(*layers))
            c_in = c
        self.blocks = nn.ModuleList(blocks)


def build_generator(cfg: GeneratorConfig | None = None, seed: int = 0) -> Generator:
    g = Generator(cfg or GeneratorConfig())
    init_weights(g, seed)
    return g


def build_discriminator(cfg: DiscriminatorConfig | None = None, seed: int = 0) -> Discriminator:
    d = Discriminator(cfg or DiscriminatorConfig())
    init_weights(d, seed)
    return d


def forward_generator(g: Generator, masked: torch.Tensor) -> torch.Tensor:
    """Outpaint a batch of masked images (runs in the module's current mode)."""
    return g(masked)


def forward_discriminator(d: Discriminator, image: torch.Tensor) -> torch.Tensor:
    """Score grid of shape ``N x 1 x S/8 x S/8``."""
    return d(image)

