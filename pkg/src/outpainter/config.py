"""Flat ``key = value`` run configuration shared by every subcommand."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any

from outpainter.compositing import BlendSpec
from outpainter.data import MaskSpec
from outpainter.errors import ConfigError
from outpainter.models import DiscriminatorConfig, GeneratorConfig
from outpainter.training import TrainConfig

PRESETS: dict[str, dict[str, Any]] = {
    "default": {},
    "small": {
        "full_size": 96,
        "keep_size": 64,
        "blend_width": 8,
        "g_encoder_channels": (32, 32, 64, 128),
        "g_bottleneck_channels": 1000,
        "d_channels": (32, 64, 128, 256, 1),
    },
    "mini": {
        "full_size": 16,
        "keep_size": 10,
        "blend_width": 2,
        "g_encoder_channels": (4, 4, 8),
        "g_bottleneck_channels": 16,
        "d_channels": (4, 8, 8, 8, 1),
    },
}


@dataclass(frozen=True)
class RunConfig:
    preset: str = "default"
    # training
    epochs: int = 200
    learning_rate: float = 3e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    batch_size: int = 32
    adv_mode: str = "scheduled"
    adv_weight: float = 0.040
    seed: int = 0
    band_weight: float = 1.0
    permanent_every: int = 25
    num_workers: int = 0
    sample_count: int = 4
    limit: int = 0  # 0 means use every image
    # geometry
    full_size: int = 192
    keep_size: int = 128
    blend_width: int = 16
    # generator
    g_encoder_channels: tuple[int, ...] = (64, 64, 128, 256, 512)
    g_bottleneck_channels: int = 4000
    g_kernel: int = 4
    g_leaky_slope: float = 0.2
    # discriminator
    d_channels: tuple[int, ...] = (64, 128, 256, 512, 1)
    d_kernel: int = 3
    d_strides: tuple[int, ...] = (2, 2, 2, 1, 1)
    d_leaky_slope: float = 0.2

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, values: dict[str, Any]) -> "RunConfig":
        """Build from (possibly string-valued) settings; a ``preset`` supplies the base values."""
        unknown = sorted(set(values) - set(cls.keys()))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        preset = str(values.get("preset", "default"))
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        base = replace(cls(), preset=preset, **PRESETS[preset])
        return base.with_values({k: v for k, v in values.items() if k != "preset"})

    def with_values(self, values: dict[str, Any]) -> "RunConfig":
        types = {f.name: f.type for f in fields(self)}
        converted = {}
        for key, value in values.items():
            if key not in types:
                raise ConfigError(f"unknown config key: {key}")
            converted[key] = _convert(key, types[key], value)
        cfg = replace(self, **converted)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.from_mapping(read_config_file(path))

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def validate(self) -> None:
        # each accessor raises ConfigError on bad values
        self.train_config()
        m = self.mask_spec()
        self.generator_config()
        self.discriminator_config()
        self.blend_spec().validate(m)
        if self.limit < 0:
            raise ConfigError(f"limit must be >= 0, got {self.limit}")

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: getattr(self, k) for k in names})

    def mask_spec(self) -> MaskSpec:
        return MaskSpec(self.full_size, self.keep_size)

    def blend_spec(self) -> BlendSpec:
        return BlendSpec(self.blend_width)

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(
            input_size=self.full_size,
            encoder_channels=self.g_encoder_channels,
            bottleneck_channels=self.g_bottleneck_channels,
            kernel=self.g_kernel,
            leaky_slope=self.g_leaky_slope,
        )

    def discriminator_config(self) -> DiscriminatorConfig:
        return DiscriminatorConfig(
            input_size=self.full_size,
            channels=self.d_channels,
            kernel=self.d_kernel,
            strides=self.d_strides,
            leaky_slope=self.d_leaky_slope,
        )


def read_config_file(path) -> dict[str, str]:
    """Raw string settings of a flat ``key = value`` file (``#`` comments allowed)."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str  # keep key case so typos are not silently folded
    try:
        text = Path(path).read_text(encoding="utf-8")
        parser.read_string("[run]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return dict(parser["run"])


def _convert(key: str, typ: str, value: Any):
    try:
        if typ.startswith("tuple"):
            if isinstance(value, str):
                return tuple(int(v) for v in value.replace(" ", "").split(",") if v)
            return tuple(int(v) for v in value)
        if typ == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if typ == "float":
            return float(value)
        return str(value).strip()
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value for {key}: {value!r}") from None
