"""Harmonize a raw outpainting by pushing it up a multi-scale refiner pyramid.

A refiner is fitted to the original photo at every pyramid scale. The raw
outpainted image is shrunk to one of the coarse scales and then alternately
upsampled and refined until it reaches the original's resolution. The refiner
is pluggable; ``baseline`` matches per-scale color moments and high-frequency
detail energy of the original, ``identity`` does nothing.
"""

from __future__ import annotations

import logging
import pickle
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.ndimage import gaussian_filter

from outpainter.data import content_hash, from_uint8, read_image, resize_bilinear
from outpainter.errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)

DEFAULT_SCALE_FACTOR = 0.75
DEFAULT_MIN_SIZE = 25
DEFAULT_MAX_SIDE = 512
DEFAULT_INJECT_SCALE = 2


def pyramid_sizes(height: int, width: int, r: float = DEFAULT_SCALE_FACTOR, min_size: int = DEFAULT_MIN_SIZE):
    """``(h, w)`` per scale, coarse to fine; scale ``k`` below the top is ``round(side * r**k)``."""
    if not 0.0 < r < 1.0:
        raise ConfigError(f"scale factor must lie in (0, 1), got {r}")
    if min(height, width) < min_size:
        raise ConfigError(f"image {height}x{width} is smaller than min_size {min_size}")
    sizes = []
    k = 0
    while True:
        h, w = round(height * r**k), round(width * r**k)
        if min(h, w) < min_size:
            break
        sizes.append((h, w))
        k += 1
    return sizes[::-1]


class Refiner:
    """Per-scale transform fitted to the original image's pyramid levels."""

    def fit(self, levels: list[np.ndarray]) -> None:
        self.num_levels = len(levels)

    def refine(self, image: np.ndarray, level: int) -> np.ndarray:
        raise NotImplementedError


class IdentityRefiner(Refiner):
    def refine(self, image, level):
        return image


class BaselineRefiner(Refiner):
    """Matches each channel's mean/std, then rescales the blur residual so its
    energy equals the original level's."""

    def __init__(self, sigma: float = 1.0, max_gain: float = 3.0, eps: float = 1e-6):
        self.sigma = sigma
        self.max_gain = max_gain
        self.eps = eps
        self.stats: list[dict] = []

    def _split(self, img):
        low = gaussian_filter(img, sigma=(self.sigma, self.sigma, 0), mode="reflect")
        return low, img - low

    def fit(self, levels):
        super().fit(levels)
        self.stats = []
        for lvl in levels:
            lvl = lvl.astype(np.float64)
            _, high = self._split(lvl)
            self.stats.append(
                {
                    "mean": lvl.mean(axis=(0, 1)),
                    "std": lvl.std(axis=(0, 1)),
                    "detail_std": high.std(axis=(0, 1)),
                }
            )

    def refine(self, image, level):
        st = self.stats[level]
        y = np.asarray(image, dtype=np.float64)
        mu, sd = y.mean(axis=(0, 1)), y.std(axis=(0, 1))
        scale = np.where(sd > self.eps, st["std"] / np.maximum(sd, self.eps), 1.0)
        y = (y - mu) * scale + st["mean"]
        low, high = self._split(y)
        hsd = high.std(axis=(0, 1))
        gain = np.where(hsd > self.eps, np.clip(st["detail_std"] / np.maximum(hsd, self.eps), 0.0, self.max_gain), 1.0)
        return (low + high * gain).astype(np.float32)


_REGISTRY: dict[str, Callable[[], Refiner]] = {
    "baseline": BaselineRefiner,
    "identity": IdentityRefiner,
}


def register_refiner(name: str, factory: Callable[[], Refiner]) -> None:
    """Make ``factory`` (a zero-argument callable returning a :class:`Refiner`) selectable by name."""
    if name in _REGISTRY:
        raise ConfigError(f"refiner {name!r} is already registered")
    _REGISTRY[name] = factory


def available_refiners() -> list[str]:
    return sorted(_REGISTRY)


def make_refiner(name: str) -> Refiner:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise ConfigError(f"unknown refiner {name!r}; available: {available_refiners()}") from None


@dataclass
class RefinerPyramid:
    sizes: list[tuple[int, int]]
    scale_factor: float
    min_size: int
    refiner_name: str
    refiner: Refiner
    image_id: str = ""
    levels: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def num_scales(self) -> int:
        return len(self.sizes)

    @property
    def finest(self) -> tuple[int, int]:
        return self.sizes[-1]


@dataclass(frozen=True)
class InjectionSpec:
    inject_scale: int = DEFAULT_INJECT_SCALE

    def validate(self, p: RefinerPyramid) -> None:
        if not 0 <= self.inject_scale < p.num_scales:
            raise ConfigError(f"inject_scale {self.inject_scale} out of range for {p.num_scales} scales")


def train_refiner(
    original: np.ndarray,
    r: float = DEFAULT_SCALE_FACTOR,
    min_size: int = DEFAULT_MIN_SIZE,
    refiner: str = "baseline",
    max_side: int | None = DEFAULT_MAX_SIDE,
    image_id: str = "",
) -> RefinerPyramid:
    """Fit the named refiner to every pyramid level of ``original`` (``[-1, 1]`` float)."""
    original = np.asarray(original, dtype=np.float32)
    if original.ndim != 3 or original.shape[2] != 3:
        raise ShapeError(f"original must be H x W x 3, got {original.shape}")
    h, w = original.shape[:2]
    if max_side is not None and max(h, w) > max_side:
        raise ConfigError(
            f"original is {h}x{w}; pyramids above {max_side} px need too much memory (raise max_side to override)"
        )
    sizes = pyramid_sizes(h, w, r, min_size)
    levels = [resize_bilinear(original, s) for s in sizes]
    model = make_refiner(refiner)
    model.fit(levels)
    return RefinerPyramid(sizes, r, min_size, refiner, model, image_id, levels)


def harmonize(p: RefinerPyramid, raw_outpaint: np.ndarray, inj: InjectionSpec | None = None) -> np.ndarray:
    """Inject ``raw_outpaint`` at ``inj.inject_scale`` and refine it up to the finest scale."""
    inj = inj or InjectionSpec(min(DEFAULT_INJECT_SCALE, p.num_scales - 1))
    inj.validate(p)
    y = resize_bilinear(np.asarray(raw_outpaint, dtype=np.float32), p.sizes[inj.inject_scale])
    y = p.refiner.refine(y, inj.inject_scale)
    for level in range(inj.inject_scale + 1, p.num_scales):
        y = resize_bilinear(y, p.sizes[level])
        y = p.refiner.refine(y, level)
    return y


def load_or_train_pyramid(
    original_path,
    cache_dir=None,
    r: float = DEFAULT_SCALE_FACTOR,
    min_size: int = DEFAULT_MIN_SIZE,
    refiner: str = "baseline",
    max_side: int | None = DEFAULT_MAX_SIDE,
) -> RefinerPyramid:
    """Train on an image file, reusing a pickle cached under the file's content hash."""
    digest = content_hash(original_path)
    cache_file = None
    if cache_dir is not None:
        cache_file = Path(cache_dir) / f"{digest[:16]}_{refiner}_{r:g}_{min_size}.pkl"
        if cache_file.is_file():
            logger.info("using cached pyramid %s", cache_file)
            with open(cache_file, "rb") as fh:
                return pickle.load(fh)
    original = from_uint8(read_image(original_path))
    pyramid = train_refiner(original, r, min_size, refiner, max_side, image_id=digest)
    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        with open(cache_file, "wb") as fh:
            pickle.dump(pyramid, fh)
    return pyramid
