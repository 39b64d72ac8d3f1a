"""Dataset ingestion, preprocessing and self-supervised mask synthesis.

Images are handled as ``H x W x 3`` float32 numpy arrays with values in
``[-1, 1]``; file I/O converts from/to 8-bit RGB. Network-facing helpers work
on ``N x 3 x H x W`` torch tensors.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image, UnidentifiedImageError

from outpainter.errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class MaskSpec:
    """Geometry of the kept center square inside the full canvas."""

    full_size: int = 192
    keep_size: int = 128

    def __post_init__(self):
        if self.keep_size <= 0 or self.full_size <= 0:
            raise ConfigError(f"mask sizes must be positive, got {self}")
        if self.keep_size >= self.full_size:
            raise ConfigError(
                f"keep_size ({self.keep_size}) must be smaller than full_size ({self.full_size})"
            )
        if self.keep_size % 2 or self.full_size % 2:
            raise ConfigError(f"mask sizes must both be even, got {self}")

    @classmethod
    def for_full_size(cls, full_size: int) -> "MaskSpec":
        """Keep the same 2/3 linear ratio as the 192/128 default."""
        keep = int(round(full_size * 2 / 3 / 2)) * 2
        return cls(full_size, keep)

    @property
    def band(self) -> int:
        return (self.full_size - self.keep_size) // 2

    @property
    def center(self) -> tuple[slice, slice]:
        """Row and column slices of the kept square."""
        s = slice(self.band, self.band + self.keep_size)
        return s, s

    @property
    def hallucinated_pixels(self) -> int:
        return self.full_size**2 - self.keep_size**2

    @property
    def hallucinated_fraction(self) -> float:
        return 1.0 - (self.keep_size / self.full_size) ** 2

    @property
    def area_ratio(self) -> float:
        return (self.full_size / self.keep_size) ** 2

    def band_mask(self) -> np.ndarray:
        """Binary ``full_size x full_size`` map, 1 on the hallucinated band."""
        mask = np.ones((self.full_size, self.full_size), dtype=np.uint8)
        rows, cols = self.center
        mask[rows, cols] = 0
        return mask


# --------------------------------------------------------------------------
# image conversion and resizing


def to_unit(img):
    """Map ``[-1, 1]`` values to ``[0, 1]``."""
    return (img + 1.0) / 2.0


def from_uint8(img: np.ndarray) -> np.ndarray:
    return img.astype(np.float32) / 255.0 * 2.0 - 1.0


def to_uint8(img: np.ndarray) -> np.ndarray:
    unit = np.clip(to_unit(np.asarray(img, dtype=np.float64)), 0.0, 1.0)
    return np.round(unit * 255.0).astype(np.uint8)


def _as_rgb(raw: np.ndarray) -> np.ndarray:
    if raw.ndim == 2:
        raw = raw[:, :, None]
    if raw.ndim != 3:
        raise ShapeError(f"expected an H x W [x C] image, got shape {raw.shape}")
    if raw.shape[0] < 1 or raw.shape[1] < 1:
        raise ShapeError(f"image has no pixels: shape {raw.shape}")
    channels = raw.shape[2]
    if channels == 1:
        return np.repeat(raw, 3, axis=2)
    if channels in (3, 4):
        return raw[:, :, :3]
    if channels == 2:  # gray + alpha
        return np.repeat(raw[:, :, :1], 3, axis=2)
    raise ShapeError(f"unsupported channel count {channels}")


def center_crop_square(img: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    side = min(h, w)
    top = (h - side) // 2
    left = (w - side) // 2
    return img[top : top + side, left : left + side]


def resize_bilinear(img: np.ndarray, size) -> np.ndarray:
    """Bilinear resize of an ``H x W x C`` float image to ``size`` (int or (h, w)).

    Downscaling is antialiased. Returns the input unchanged (as float32) when the
    size already matches.
    """
    if isinstance(size, (int, np.integer)):
        size = (int(size), int(size))
    size = (int(size[0]), int(size[1]))
    img = np.asarray(img, dtype=np.float32)
    if img.shape[:2] == size:
        return img
    t = torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1)))[None]
    shrinking = size[0] < img.shape[0] or size[1] < img.shape[1]
    out = F.interpolate(t, size=size, mode="bilinear", align_corners=False, antialias=shrinking)
    return out[0].numpy().transpose(1, 2, 0).copy()


def preprocess(raw: np.ndarray, full_size: int = 192) -> np.ndarray:
    """Bring an arbitrary image to a ``full_size`` square in ``[-1, 1]``.

    ``uint8`` input is treated as 8-bit color and normalized; float input is
    assumed to already be in ``[-1, 1]``. Grayscale is replicated to RGB and an
    alpha channel is dropped. Non-square images are center-cropped before the
    bilinear resize.
    """
    raw = np.asarray(raw)
    rgb = _as_rgb(raw)
    if rgb.dtype == np.uint8:
        rgb = from_uint8(rgb)
    elif not np.issubdtype(rgb.dtype, np.floating):
        raise ConfigError(f"unsupported image dtype {rgb.dtype}")
    return resize_bilinear(center_crop_square(rgb), full_size)


def read_image(path) -> np.ndarray:
    """Decode an image file to an ``H x W x 3`` uint8 RGB array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def write_image(path, img: np.ndarray) -> None:
    """Write a ``[-1, 1]`` float image as 8-bit PNG/JPEG (by extension)."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(img)).save(path)


def tensor_to_images(batch: torch.Tensor) -> np.ndarray:
    return batch.detach().cpu().numpy().transpose(0, 2, 3, 1)


def images_to_tensor(images) -> torch.Tensor:
    arr = np.asarray(images, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2)))


# --------------------------------------------------------------------------
# masking


def make_masked_input(x: np.ndarray, m: MaskSpec, means: Sequence[float]):
    """Replace everything outside the kept center square by the channel means.

    Returns ``(masked, mask)`` where ``mask`` is 1 on the hallucination band.
    """
    x = np.asarray(x, dtype=np.float32)
    if x.shape != (m.full_size, m.full_size, 3):
        raise ShapeError(f"expected image of shape {(m.full_size, m.full_size, 3)}, got {x.shape}")
    mask = m.band_mask()
    masked = np.empty_like(x)
    masked[...] = np.asarray(means, dtype=np.float32)
    rows, cols = m.center
    masked[rows, cols] = x[rows, cols]
    return masked, mask


def mask_batch(x: torch.Tensor, m: MaskSpec, means: Sequence[float]) -> torch.Tensor:
    """Tensor (``N x 3 x H x W``) version of :func:`make_masked_input`."""
    fill = torch.as_tensor(np.asarray(means, dtype=np.float32), dtype=x.dtype, device=x.device)
    masked = fill.view(1, 3, 1, 1).expand_as(x).clone()
    rows, cols = m.center
    masked[:, :, rows, cols] = x[:, :, rows, cols]
    return masked


def embed_center(photo: np.ndarray, m: MaskSpec, means: Sequence[float]) -> np.ndarray:
    """Place a ``keep_size`` photo in the middle of a mean-filled canvas."""
    photo = np.asarray(photo, dtype=np.float32)
    if photo.shape != (m.keep_size, m.keep_size, 3):
        raise ShapeError(f"expected photo of shape {(m.keep_size, m.keep_size, 3)}, got {photo.shape}")
    canvas = np.empty((m.full_size, m.full_size, 3), dtype=np.float32)
    canvas[...] = np.asarray(means, dtype=np.float32)
    rows, cols = m.center
    canvas[rows, cols] = photo
    return canvas


# --------------------------------------------------------------------------
# datasets


@dataclass
class DatasetHandle:
    root: Path
    split: str
    paths: list[Path]
    full_size: int = 192
    skipped: list[Path] = field(default_factory=list)
    _means: tuple[float, float, float] | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return len(self.paths)

    def __len__(self) -> int:
        return len(self.paths)

    @property
    def image_ids(self) -> list[str]:
        return [p.relative_to(self.split_dir).as_posix() for p in self.paths]

    @property
    def split_dir(self) -> Path:
        candidate = self.root / self.split
        return candidate if candidate.is_dir() else self.root

    @property
    def channel_means(self) -> tuple[float, float, float]:
        if self._means is None:
            self._means = channel_means(self)
        return self._means

    def image(self, index: int) -> np.ndarray:
        return preprocess(read_image(self.paths[index]), self.full_size)


def _decodable(path: Path) -> bool:
    try:
        with Image.open(path) as im:
            im.verify()
        return True
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError):
        return False


def load_dataset(root, split: str = "train", limit: int | None = None, full_size: int = 192) -> DatasetHandle:
    """Index the images of one split.

    The split lives in ``root/<split>/`` when that directory exists, otherwise
    ``root`` itself is taken as the split directory. Files are ordered
    lexicographically by relative path; ``limit`` keeps the first ``limit``.
    Undecodable files are skipped with a warning.
    """
    if split not in SPLITS:
        raise ConfigError(f"split must be one of {SPLITS}, got {split!r}")
    root = Path(root)
    if not root.is_dir():
        raise ConfigError(f"dataset root {root} does not exist or is not a directory")
    handle = DatasetHandle(root=root, split=split, paths=[], full_size=full_size)
    base = handle.split_dir
    candidates = sorted(
        (p for p in base.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES),
        key=lambda p: p.relative_to(base).as_posix(),
    )
    for path in candidates:
        if limit is not None and len(handle.paths) >= limit:
            break
        if _decodable(path):
            handle.paths.append(path)
        else:
            handle.skipped.append(path)
            logger.warning("skipping undecodable image %s", path)
    if handle.skipped:
        logger.warning("%d undecodable file(s) skipped under %s", len(handle.skipped), base)
    if not handle.paths:
        raise ConfigError(f"no decodable images found under {base}")
    return handle


def channel_means(d: DatasetHandle) -> tuple[float, float, float]:
    """Per-channel mean of the preprocessed images, in ``[-1, 1]``."""
    if d.split != "train":
        raise ConfigError(f"channel means must come from the train split, got {d.split!r}")
    if d.size == 0:
        raise ConfigError("cannot compute channel means of an empty dataset")
    total = np.zeros(3, dtype=np.float64)
    for i in range(d.size):
        total += d.image(i).reshape(-1, 3).mean(axis=0, dtype=np.float64)
    means = np.clip(total / d.size, -1.0, 1.0)
    return tuple(float(v) for v in means)


def write_stats(path, d: DatasetHandle, means: Sequence[float]) -> None:
    lines = [f"size={d.size}", f"mean_r={means[0]!r}", f"mean_g={means[1]!r}", f"mean_b={means[2]!r}"]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_stats(path) -> dict:
    out: dict = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = int(value) if key.strip() == "size" else float(value)
    return out


class OutpaintDataset(torch.utils.data.Dataset):
    """Yields ``(masked, target)`` CHW tensor pairs for one dataset split."""

    def __init__(self, handle: DatasetHandle, mask: MaskSpec, means: Sequence[float], cache: bool = True):
        if handle.full_size != mask.full_size:
            raise ConfigError(
                f"dataset full_size {handle.full_size} does not match mask full_size {mask.full_size}"
            )
        self.handle = handle
        self.mask = mask
        self.means = tuple(means)
        self._cache = None
        if cache:
            self._cache = images_to_tensor(np.stack([handle.image(i) for i in range(handle.size)]))

    def __len__(self) -> int:
        return self.handle.size

    def target(self, index: int) -> torch.Tensor:
        if self._cache is not None:
            return self._cache[index]
        return images_to_tensor(self.handle.image(index))[0]

    def __getitem__(self, index: int):
        x = self.target(index)
        return mask_batch(x[None], self.mask, self.means)[0], x


def epoch_order(n: int, seed: int, epoch: int) -> list[int]:
    """Deterministic shuffle of ``range(n)`` for a given seed and epoch."""
    gen = torch.Generator().manual_seed(int(seed) * 1_000_003 + int(epoch))
    return torch.randperm(n, generator=gen).tolist()


def iter_batches(
    dataset: OutpaintDataset,
    batch_size: int,
    seed: int | None = None,
    epoch: int = 0,
    num_workers: int = 0,
) -> Iterator[tuple[torch.Tensor, torch.Tensor]]:
    """Batches in a fixed order; shuffled per epoch when ``seed`` is given.

    Worker processes only prefetch; the delivered order is set by the sampler.
    """
    order = list(range(len(dataset))) if seed is None else epoch_order(len(dataset), seed, epoch)
    loader = torch.utils.data.DataLoader(
        dataset,
        batch_size=batch_size,
        sampler=order,
        num_workers=num_workers,
        persistent_workers=False,
    )
    yield from loader


def list_images(path) -> list[Path]:
    """A single image file, or every image in a directory (sorted)."""
    path = Path(path)
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise ConfigError(f"{path} is neither an image file nor a directory")
    found = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not found:
        raise ConfigError(f"no images found in {path}")
    return found


def content_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


__all__ = [
    "MaskSpec",
    "DatasetHandle",
    "OutpaintDataset",
    "channel_means",
    "embed_center",
    "epoch_order",
    "iter_batches",
    "load_dataset",
    "make_masked_input",
    "mask_batch",
    "preprocess",
    "read_image",
    "read_stats",
    "resize_bilinear",
    "write_image",
    "write_stats",
]
