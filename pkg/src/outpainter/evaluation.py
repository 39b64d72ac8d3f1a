"""Test-set statistics: per-image MSE and realism, extreme-sample selection."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np
import torch
from torch import nn

from outpainter.data import (
    DatasetHandle,
    MaskSpec,
    OutpaintDataset,
    iter_batches,
    tensor_to_images,
    to_unit,
    write_image,
)
from outpainter.errors import ConfigError

CRITERIA = ("low_mse", "high_mse", "high_realism")


@dataclass
class EvalReport:
    image_ids: list[str]
    mse: list[float]
    realism: list[float] = field(default_factory=list)
    band_mse: list[float] = field(default_factory=list)
    model_id: str = ""

    @property
    def size(self) -> int:
        return len(self.image_ids)

    @property
    def mean_mse(self) -> float:
        return float(np.mean(self.mse))

    @property
    def mean_realism(self) -> float:
        return float(np.mean(self.realism)) if self.realism else float("nan")

    @property
    def mean_band_mse(self) -> float:
        return float(np.mean(self.band_mse)) if self.band_mse else float("nan")

    def summary(self) -> str:
        return (
            f"model={self.model_id or '-'} images={self.size} mean_mse={self.mean_mse:.6f} "
            f"mean_realism={self.mean_realism:.6f} mean_band_mse={self.mean_band_mse:.6f}"
        )

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        realism = self.realism or [float("nan")] * self.size
        band = self.band_mse or [float("nan")] * self.size
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["image_id", "mse", "realism", "band_mse"])
            for row in zip(self.image_ids, self.mse, realism, band):
                writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def _inference(net):
    if isinstance(net, nn.Module):
        net.eval()
    return net


def _resolve_means(data: DatasetHandle, means):
    if means is not None:
        return tuple(means)
    if data.split == "train":
        return data.channel_means
    raise ConfigError("channel means of the train split are required to evaluate a non-train split")


def generate(
    g: Callable, data: DatasetHandle, mask: MaskSpec, means=None, batch_size: int = 16
) -> Iterator[tuple[list[str], torch.Tensor, torch.Tensor, torch.Tensor]]:
    """Yield ``(ids, masked, raw_output, target)`` batches in dataset order."""
    if data.size == 0:
        raise ConfigError("cannot evaluate an empty dataset")
    dataset = OutpaintDataset(data, mask, _resolve_means(data, means), cache=False)
    ids = data.image_ids
    _inference(g)
    start = 0
    with torch.no_grad():
        for masked, x in iter_batches(dataset, batch_size):
            n = x.shape[0]
            yield ids[start : start + n], masked, g(masked), x
            start += n


def image_mse(gx: torch.Tensor, x: torch.Tensor, region: np.ndarray | None = None) -> list[float]:
    """Per-image MSE in ``[0, 1]`` value scale, optionally restricted to a binary H x W region."""
    sq = (to_unit(gx.double()) - to_unit(x.double())) ** 2
    if region is None:
        return sq.mean(dim=(1, 2, 3)).tolist()
    r = torch.from_numpy(region.astype(bool))
    return sq[:, :, r].mean(dim=(1, 2)).tolist()


def realism_scores(d: Callable, gx: torch.Tensor) -> list[float]:
    """Mean score-grid value per image, clamped to [0, 1]."""
    grid = d(gx).double()
    return grid.mean(dim=tuple(range(1, grid.dim()))).clamp(0.0, 1.0).tolist()


def eval_mse(g: Callable, data: DatasetHandle, mask: MaskSpec | None = None, means=None, batch_size: int = 16):
    """Per-image and mean MSE of the raw (unblended) generator output."""
    mask = mask or MaskSpec.for_full_size(data.full_size)
    per_image: list[float] = []
    for _, _, gx, x in generate(g, data, mask, means, batch_size):
        per_image.extend(image_mse(gx, x))
    return per_image, float(np.mean(per_image))


def eval_realism(g: Callable, d: Callable, data: DatasetHandle, mask: MaskSpec | None = None, means=None, batch_size: int = 16):
    mask = mask or MaskSpec.for_full_size(data.full_size)
    _inference(d)
    per_image: list[float] = []
    for _, _, gx, _ in generate(g, data, mask, means, batch_size):
        with torch.no_grad():
            per_image.extend(realism_scores(d, gx))
    return per_image, float(np.mean(per_image))


def evaluate(
    g: Callable,
    d: Callable | None,
    data: DatasetHandle,
    mask: MaskSpec,
    means=None,
    batch_size: int = 16,
    model_id: str = "",
) -> EvalReport:
    """Single pass computing full-image MSE, band-only MSE and (if ``d``) realism."""
    band = mask.band_mask()
    report = EvalReport(image_ids=[], mse=[], model_id=model_id)
    if d is not None:
        _inference(d)
    for ids, _, gx, x in generate(g, data, mask, means, batch_size):
        report.image_ids.extend(ids)
        report.mse.extend(image_mse(gx, x))
        report.band_mse.extend(image_mse(gx, x, band))
        if d is not None:
            with torch.no_grad():
                report.realism.extend(realism_scores(d, gx))
    return report


def select_extremes(report: EvalReport, k: int, criterion: str) -> list[str]:
    """Top/bottom ``k`` image ids; ties go to the lexicographically smaller id."""
    if criterion not in CRITERIA:
        raise ConfigError(f"criterion must be one of {CRITERIA}, got {criterion!r}")
    if not 0 <= k <= report.size:
        raise ConfigError(f"k={k} out of range for {report.size} images")
    if criterion == "low_mse":
        keyed = [(v, i) for v, i in zip(report.mse, report.image_ids)]
    elif criterion == "high_mse":
        keyed = [(-v, i) for v, i in zip(report.mse, report.image_ids)]
    else:
        if len(report.realism) != report.size:
            raise ConfigError("report has no realism values")
        keyed = [(-v, i) for v, i in zip(report.realism, report.image_ids)]
    return [i for _, i in sorted(keyed)[:k]]


def band_gradient_energy(images, mask: MaskSpec) -> float:
    """Mean squared forward-difference gradient magnitude over the band, ``[0, 1]`` scale.

    ``images`` is an ``N x 3 x H x W`` tensor or ``N x H x W x 3`` array in ``[-1, 1]``.
    """
    if isinstance(images, torch.Tensor):
        images = tensor_to_images(images)
    arr = to_unit(np.asarray(images, dtype=np.float64))
    gy = np.zeros_like(arr)
    gx = np.zeros_like(arr)
    gy[:, :-1] = arr[:, 1:] - arr[:, :-1]
    gx[:, :, :-1] = arr[:, :, 1:] - arr[:, :, :-1]
    energy = (gx**2 + gy**2).sum(axis=3)  # N x H x W
    band = mask.band_mask().astype(bool)
    return float(energy[:, band].mean())


def write_gallery(path, rows: Sequence[Sequence[np.ndarray]], pad: int = 2) -> None:
    """Grid PNG; each row is a list of equally sized ``[-1, 1]`` images."""
    h, w = rows[0][0].shape[:2]
    ncol = max(len(r) for r in rows)
    canvas = np.ones(((h + pad) * len(rows) + pad, (w + pad) * ncol + pad, 3), dtype=np.float32)
    for ri, row in enumerate(rows):
        for ci, img in enumerate(row):
            top, left = pad + ri * (h + pad), pad + ci * (w + pad)
            canvas[top : top + h, left : left + w] = img
    write_image(path, canvas)
