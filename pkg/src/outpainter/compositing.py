"""Inference-time outpainting, alpha blending and recursive extrapolation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import torch
from torch import nn

from outpainter.data import MaskSpec, embed_center, images_to_tensor, resize_bilinear, tensor_to_images
from outpainter.errors import ConfigError, ShapeError


@dataclass(frozen=True)
class BlendSpec:
    band_width: int = 16
    profile: str = "linear"

    def __post_init__(self):
        if self.profile != "linear":
            raise ConfigError(f"only the linear blend profile is supported, got {self.profile!r}")
        if self.band_width < 0:
            raise ConfigError(f"band_width must be >= 0, got {self.band_width}")

    def validate(self, m: MaskSpec) -> None:
        if self.band_width > m.keep_size // 2:
            raise ConfigError(
                f"blend band_width {self.band_width} exceeds half the kept square ({m.keep_size // 2})"
            )


def alpha_mask(m: MaskSpec, b: BlendSpec) -> np.ndarray:
    """``full_size x full_size`` alpha: 0 outside the kept square, linear ramp
    over its outer ``band_width`` pixels, 1 further in."""
    b.validate(m)
    idx = np.arange(m.full_size)
    # pixels counted inward from the kept square's edge; negative outside it
    inward = np.minimum(idx - m.band, m.band + m.keep_size - 1 - idx)
    d = np.minimum(inward[:, None], inward[None, :]).astype(np.float64)
    if b.band_width == 0:
        alpha = (d >= 0).astype(np.float64)
    else:
        alpha = np.clip(d / b.band_width, 0.0, 1.0)
    return alpha.astype(np.float32)


def _center_from(image: np.ndarray, m: MaskSpec) -> np.ndarray:
    image = np.asarray(image, dtype=np.float32)
    if image.shape == (m.keep_size, m.keep_size, 3):
        return image
    if image.shape == (m.full_size, m.full_size, 3):
        rows, cols = m.center
        return image[rows, cols]
    raise ShapeError(
        f"image must be {m.keep_size}x{m.keep_size}x3 or {m.full_size}x{m.full_size}x3, got {image.shape}"
    )


def blend(input_center: np.ndarray, raw: np.ndarray, m: MaskSpec, b: BlendSpec | None = None) -> np.ndarray:
    """Paste the known photo over the raw output through the alpha ramp.

    ``input_center`` may be the ``keep_size`` photo or a full-size canvas whose
    center holds it.
    """
    b = b or BlendSpec()
    raw = np.asarray(raw, dtype=np.float32)
    if raw.shape != (m.full_size, m.full_size, 3):
        raise ShapeError(f"raw output must be {m.full_size}x{m.full_size}x3, got {raw.shape}")
    canvas = raw.copy()
    rows, cols = m.center
    canvas[rows, cols] = _center_from(input_center, m)
    alpha = alpha_mask(m, b)[:, :, None]
    # raw + alpha*(canvas-raw) is exact where alpha == 0 or canvas == raw;
    # the alpha == 1 interior is copied so it is exact too
    out = raw + alpha * (canvas - raw)
    return np.where(alpha == 1.0, canvas, out).astype(np.float32)


def outpaint(g: Callable, image: np.ndarray, m: MaskSpec, means: Sequence[float]) -> np.ndarray:
    """Raw ``full_size`` generator output for one photo.

    ``image`` is either a ``keep_size`` photo (embedded into a mean-filled
    canvas first) or an already masked ``full_size`` canvas.
    """
    image = np.asarray(image, dtype=np.float32)
    if image.shape == (m.keep_size, m.keep_size, 3):
        canvas = embed_center(image, m, means)
    elif image.shape == (m.full_size, m.full_size, 3):
        canvas = image
    else:
        raise ShapeError(
            f"image must be {m.keep_size}x{m.keep_size}x3 or {m.full_size}x{m.full_size}x3, got {image.shape}"
        )
    if isinstance(g, nn.Module):
        g.eval()
    with torch.no_grad():
        out = g(images_to_tensor(canvas))
    return tensor_to_images(out)[0].copy()


def outpaint_and_blend(g, photo, m: MaskSpec, means, b: BlendSpec | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Returns ``(composite, raw)``."""
    raw = outpaint(g, photo, m, means)
    return blend(photo, raw, m, b), raw


def effective_zoom(m: MaskSpec, steps: int) -> float:
    return (m.full_size / m.keep_size) ** steps


def recursive_outpaint(
    g: Callable,
    photo: np.ndarray,
    steps: int,
    m: MaskSpec,
    means: Sequence[float],
    b: BlendSpec | None = None,
) -> list[np.ndarray]:
    """Repeatedly shrink the last composite to ``keep_size`` and outpaint it again.

    Returns one ``full_size`` composite per step; after ``k`` steps the field
    of view is :func:`effective_zoom` times the original.
    """
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}")
    composites = []
    current = np.asarray(photo, dtype=np.float32)
    for _ in range(steps):
        composite, _ = outpaint_and_blend(g, current, m, means, b)
        composites.append(composite)
        current = resize_bilinear(composite, m.keep_size)
    return composites
