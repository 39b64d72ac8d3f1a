"""Losses, adversarial-weight schedule and the alternating G/D training loop."""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from outpainter.data import DatasetHandle, MaskSpec, OutpaintDataset, iter_batches, tensor_to_images, write_image
from outpainter.errors import CheckpointError, ConfigError, NonFiniteLossError, ShapeError
from outpainter.models import (
    Discriminator,
    DiscriminatorConfig,
    Generator,
    GeneratorConfig,
    build_discriminator,
    build_generator,
)

logger = logging.getLogger(__name__)

ADV_MODES = ("off", "scheduled", "fixed")
METRICS_HEADER = ("epoch", "l_rec", "l_adv", "l_g", "l_d", "lambda_adv")
CHECKPOINT_VERSION = 1

# (last epoch inclusive, weight); anything past the final bound gets FINAL_ADV_WEIGHT
ADV_SCHEDULE = ((10, 0.001), (30, 0.005), (60, 0.015))
FINAL_ADV_WEIGHT = 0.040


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 3e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    batch_size: int = 32
    adv_mode: str = "scheduled"
    adv_weight: float = FINAL_ADV_WEIGHT  # only used when adv_mode == "fixed"
    seed: int = 0
    band_weight: float = 1.0
    permanent_every: int = 25
    num_workers: int = 0
    sample_count: int = 4

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.adv_mode not in ADV_MODES:
            raise ConfigError(f"adv_mode must be one of {ADV_MODES}, got {self.adv_mode!r}")
        if not 0.0 <= self.adv_weight <= 1.0:
            raise ConfigError(f"adv_weight must lie in [0, 1], got {self.adv_weight}")
        if not 0.0 <= self.adam_beta1 < 1.0 or not 0.0 <= self.adam_beta2 < 1.0:
            raise ConfigError("Adam betas must lie in [0, 1)")
        if self.band_weight <= 0:
            raise ConfigError(f"band_weight must be > 0, got {self.band_weight}")
        if self.permanent_every < 1 or self.num_workers < 0 or self.sample_count < 0:
            raise ConfigError("permanent_every >= 1, num_workers >= 0 and sample_count >= 0 required")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass(frozen=True)
class ScheduleState:
    epoch: int
    lambda_adv: float

    @property
    def lambda_rec(self) -> float:
        return 1.0 - self.lambda_adv


@dataclass(frozen=True)
class MetricsRow:
    epoch: int
    l_rec: float
    l_adv: float
    l_g: float
    l_d: float
    lambda_adv: float

    def as_csv_row(self) -> list[str]:
        return [str(self.epoch)] + [repr(float(v)) for v in (self.l_rec, self.l_adv, self.l_g, self.l_d, self.lambda_adv)]


# --------------------------------------------------------------------------
# losses (all norms are means over elements)


def _same_shape(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def reconstruction_loss(x: torch.Tensor, gx: torch.Tensor, weight: torch.Tensor | None = None) -> torch.Tensor:
    """Mean absolute error; ``weight`` is an optional ``H x W`` per-pixel weight map."""
    _same_shape(x, gx)
    diff = (x - gx).abs()
    if weight is None:
        return diff.mean()
    w = weight.to(diff).expand_as(diff)
    return (w * diff).sum() / w.sum()


def adversarial_loss_g(fake_scores: torch.Tensor) -> torch.Tensor:
    return ((fake_scores - 1.0) ** 2).mean()


def discriminator_loss(real_scores: torch.Tensor, fake_scores: torch.Tensor) -> torch.Tensor:
    return ((real_scores - 1.0) ** 2).mean() + (fake_scores**2).mean()


def generator_loss(l_rec, l_adv, s: ScheduleState):
    return s.lambda_rec * l_rec + s.lambda_adv * l_adv


def adv_weight_schedule(n: int) -> float:
    """Piecewise-constant adversarial weight for 1-based epoch ``n``."""
    if n < 1:
        raise ValueError(f"epoch must be >= 1, got {n}")
    for last_epoch, weight in ADV_SCHEDULE:
        if n <= last_epoch:
            return weight
    return FINAL_ADV_WEIGHT


def schedule_state(tc: TrainConfig, epoch: int) -> ScheduleState:
    if tc.adv_mode == "off":
        lam = 0.0
    elif tc.adv_mode == "fixed":
        lam = tc.adv_weight
    else:
        lam = adv_weight_schedule(epoch)
    return ScheduleState(epoch=epoch, lambda_adv=lam)


def band_weight_map(mask: MaskSpec, band_weight: float) -> torch.Tensor | None:
    if band_weight == 1.0:
        return None
    w = torch.from_numpy(mask.band_mask().astype(np.float32)) * (band_weight - 1.0) + 1.0
    return w


# --------------------------------------------------------------------------
# checkpoints


def _atomic_save(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    torch.save(obj, tmp)
    os.replace(tmp, path)


def load_checkpoint(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint {path} does not exist")
    try:
        ckpt = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:  # torch raises a zoo of types for corrupt files
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    version = ckpt.get("format_version") if isinstance(ckpt, dict) else None
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint {path} has format version {version!r}, expected {CHECKPOINT_VERSION}"
        )
    return ckpt


def networks_from_checkpoint(ckpt: dict) -> tuple[Generator, Discriminator]:
    """Rebuild both networks (in eval mode) from a loaded checkpoint."""
    g = Generator(GeneratorConfig(**ckpt["generator_config"]))
    d = Discriminator(DiscriminatorConfig(**ckpt["discriminator_config"]))
    g.load_state_dict(ckpt["generator"])
    d.load_state_dict(ckpt["discriminator"])
    return g.eval(), d.eval()


def mask_from_checkpoint(ckpt: dict) -> MaskSpec:
    return MaskSpec(**ckpt["mask"])


# --------------------------------------------------------------------------
# trainer


class Trainer:
    """Owns G, D and their optimizers; one :meth:`train_step` per batch."""

    def __init__(
        self,
        tc: TrainConfig,
        gcfg: GeneratorConfig,
        dcfg: DiscriminatorConfig,
        mask: MaskSpec,
        means: Sequence[float],
    ):
        if gcfg.input_size != mask.full_size or dcfg.input_size != mask.full_size:
            raise ConfigError(
                f"network input sizes ({gcfg.input_size}, {dcfg.input_size}) must equal full_size {mask.full_size}"
            )
        self.tc = tc
        self.mask = mask
        self.means = tuple(float(m) for m in means)
        self.g = build_generator(gcfg, seed=tc.seed)
        self.d = build_discriminator(dcfg, seed=tc.seed + 1)
        betas = (tc.adam_beta1, tc.adam_beta2)
        self.opt_g = torch.optim.Adam(self.g.parameters(), lr=tc.learning_rate, betas=betas)
        self.opt_d = torch.optim.Adam(self.d.parameters(), lr=tc.learning_rate, betas=betas)
        self.epoch = 0  # completed epochs
        self.rec_weight = band_weight_map(mask, tc.band_weight)

    def set_train_config(self, tc: TrainConfig) -> None:
        self.tc = tc
        self.rec_weight = band_weight_map(self.mask, tc.band_weight)
        for opt in (self.opt_g, self.opt_d):
            for group in opt.param_groups:
                group["lr"] = tc.learning_rate
                group["betas"] = (tc.adam_beta1, tc.adam_beta2)

    @staticmethod
    def _check(name: str, value: torch.Tensor, epoch: int, step: int) -> float:
        v = float(value.detach())
        if not math.isfinite(v):
            raise NonFiniteLossError(f"non-finite {name} ({v}) at epoch {epoch}, step {step}")
        return v

    def train_step(self, masked: torch.Tensor, x: torch.Tensor, s: ScheduleState, step: int = 0) -> dict:
        """One D update (G frozen) followed by one G update (D frozen)."""
        self.g.train()
        self.d.train()
        adversarial = self.tc.adv_mode != "off"
        gx = self.g(masked)

        l_d_value = 0.0
        if adversarial:
            self.d.requires_grad_(True)
            l_d = discriminator_loss(self.d(x), self.d(gx.detach()))
            l_d_value = self._check("L_D", l_d, s.epoch, step)
            self.opt_d.zero_grad(set_to_none=True)
            l_d.backward()
            self.opt_d.step()
            self.d.requires_grad_(False)
            l_adv = adversarial_loss_g(self.d(gx))
        else:
            l_adv = torch.zeros((), dtype=gx.dtype)
        l_rec = reconstruction_loss(x, gx, self.rec_weight)
        l_g = generator_loss(l_rec, l_adv, s)
        out = {
            "l_rec": self._check("L_rec", l_rec, s.epoch, step),
            "l_adv": self._check("L_adv", l_adv, s.epoch, step),
            "l_g": self._check("L_G", l_g, s.epoch, step),
            "l_d": l_d_value,
        }
        self.opt_g.zero_grad(set_to_none=True)
        l_g.backward()
        self.opt_g.step()
        self.d.requires_grad_(True)
        return out

    def run_epoch(self, dataset: OutpaintDataset) -> MetricsRow:
        epoch = self.epoch + 1
        s = schedule_state(self.tc, epoch)
        totals = {"l_rec": 0.0, "l_adv": 0.0, "l_g": 0.0, "l_d": 0.0}
        steps = 0
        for masked, x in iter_batches(dataset, self.tc.batch_size, self.tc.seed, epoch, self.tc.num_workers):
            losses = self.train_step(masked, x, s, step=steps)
            for k in totals:
                totals[k] += losses[k]
            steps += 1
        self.epoch = epoch
        n = max(steps, 1)
        return MetricsRow(epoch, totals["l_rec"] / n, totals["l_adv"] / n, totals["l_g"] / n, totals["l_d"] / n, s.lambda_adv)

    def state_dict(self, extra: dict | None = None) -> dict:
        return {
            "format_version": CHECKPOINT_VERSION,
            "epoch": self.epoch,
            "generator_config": self.g.config.to_dict(),
            "discriminator_config": self.d.config.to_dict(),
            "mask": {"full_size": self.mask.full_size, "keep_size": self.mask.keep_size},
            "means": list(self.means),
            "train_config": self.tc.to_dict(),
            "lambda_adv": schedule_state(self.tc, max(self.epoch, 1)).lambda_adv,
            "generator": self.g.state_dict(),
            "discriminator": self.d.state_dict(),
            "opt_g": self.opt_g.state_dict(),
            "opt_d": self.opt_d.state_dict(),
            "extra": dict(extra or {}),
        }

    @classmethod
    def from_checkpoint(cls, ckpt: dict, tc: TrainConfig | None = None) -> "Trainer":
        saved_tc = TrainConfig.from_dict(ckpt["train_config"])
        trainer = cls(
            saved_tc,
            GeneratorConfig(**ckpt["generator_config"]),
            DiscriminatorConfig(**ckpt["discriminator_config"]),
            mask_from_checkpoint(ckpt),
            ckpt["means"],
        )
        trainer.g.load_state_dict(ckpt["generator"])
        trainer.d.load_state_dict(ckpt["discriminator"])
        trainer.opt_g.load_state_dict(ckpt["opt_g"])
        trainer.opt_d.load_state_dict(ckpt["opt_d"])
        trainer.epoch = int(ckpt["epoch"])
        if tc is not None:
            trainer.set_train_config(tc)
        return trainer

    def write_samples(self, dataset: OutpaintDataset, path: Path) -> None:
        count = min(self.tc.sample_count, len(dataset))
        if count == 0:
            return
        masked, x = zip(*(dataset[i] for i in range(count)))
        masked, x = torch.stack(masked), torch.stack(x)
        self.g.eval()
        with torch.no_grad():
            gx = self.g(masked)
        self.g.train()
        rows = [np.concatenate(list(tensor_to_images(t)), axis=1) for t in (masked, gx, x)]
        write_image(path, np.concatenate(rows, axis=0))


@dataclass
class TrainResult:
    checkpoint: Path
    metrics: Path
    rows: list[MetricsRow]


def read_metrics(path) -> list[MetricsRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRICS_HEADER:
            raise ConfigError(f"{path} is not a metrics CSV (header {reader.fieldnames})")
        return [
            MetricsRow(int(r["epoch"]), *(float(r[k]) for k in METRICS_HEADER[1:]))
            for r in reader
        ]


def _write_metrics(path: Path, rows: list[MetricsRow]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for row in rows:
            writer.writerow(row.as_csv_row())
    os.replace(tmp, path)


def _fit(trainer: Trainer, dataset: OutpaintDataset, out_dir: Path, rows: list[MetricsRow], extra: dict | None) -> TrainResult:
    ckpt_dir = out_dir / "ckpt"
    metrics_path = out_dir / "metrics.csv"
    last = ckpt_dir / "last.pt"
    _write_metrics(metrics_path, rows)
    while trainer.epoch < trainer.tc.epochs:
        row = trainer.run_epoch(dataset)
        rows.append(row)
        logger.info(
            "epoch %d  l_rec=%.5f l_adv=%.5f l_g=%.5f l_d=%.5f lambda_adv=%g",
            row.epoch, row.l_rec, row.l_adv, row.l_g, row.l_d, row.lambda_adv,
        )
        _write_metrics(metrics_path, rows)
        state = trainer.state_dict(extra)
        _atomic_save(state, last)
        if row.epoch % trainer.tc.permanent_every == 0:
            _atomic_save(state, ckpt_dir / f"epoch_{row.epoch:04d}.pt")
        trainer.write_samples(dataset, out_dir / "samples" / f"epoch_{row.epoch:04d}.png")
    if not last.exists():
        _atomic_save(trainer.state_dict(extra), last)
    return TrainResult(last, metrics_path, rows)


def train(
    tc: TrainConfig,
    data: DatasetHandle,
    out_dir,
    gcfg: GeneratorConfig | None = None,
    dcfg: DiscriminatorConfig | None = None,
    mask: MaskSpec | None = None,
    means: Sequence[float] | None = None,
    extra: dict | None = None,
    cache: bool = True,
) -> TrainResult:
    """Train from scratch, writing ``metrics.csv``, ``ckpt/`` and ``samples/`` under ``out_dir``."""
    mask = mask or MaskSpec()
    gcfg = gcfg or GeneratorConfig(input_size=mask.full_size)
    dcfg = dcfg or DiscriminatorConfig(input_size=mask.full_size)
    if means is None:
        means = data.channel_means
    trainer = Trainer(tc, gcfg, dcfg, mask, means)
    dataset = OutpaintDataset(data, mask, trainer.means, cache=cache)
    return _fit(trainer, dataset, Path(out_dir), [], extra)


def resume(
    checkpoint,
    data: DatasetHandle,
    out_dir,
    tc_override: TrainConfig | None = None,
    cache: bool = True,
) -> TrainResult:
    """Continue a run from ``checkpoint``; ``tc_override`` may change the schedule or epochs.

    Metric rows after the checkpoint's epoch are discarded and the restart
    epoch is appended to ``restarts.txt`` in ``out_dir``.
    """
    ckpt = load_checkpoint(checkpoint)
    trainer = Trainer.from_checkpoint(ckpt, tc_override)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.csv"
    rows = [r for r in read_metrics(metrics_path) if r.epoch <= trainer.epoch] if metrics_path.exists() else []
    with open(out_dir / "restarts.txt", "a", encoding="utf-8") as fh:
        fh.write(f"{trainer.epoch}\n")
    dataset = OutpaintDataset(data, trainer.mask, trainer.means, cache=cache)
    return _fit(trainer, dataset, out_dir, rows, ckpt.get("extra"))

