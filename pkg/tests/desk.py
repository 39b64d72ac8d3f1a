"""Desk-scale directional experiment: rec-only vs rec+adv on the small config.

The image corpus is built from random crops of scikit-image's bundled sample
photographs and textures, written as PNG files so the whole file-based
pipeline is exercised.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from outpainter.config import RunConfig
from outpainter.data import load_dataset
from outpainter.evaluation import band_gradient_energy, evaluate, generate
from outpainter.training import load_checkpoint, networks_from_checkpoint, train

SOURCES = (
    "astronaut",
    "coffee",
    "chelsea",
    "rocket",
    "hubble_deep_field",
    "immunohistochemistry",
    "camera",
    "grass",
    "gravel",
    "brick",
    "moon",
    "coins",
)


def _sources() -> list[np.ndarray]:
    import skimage.data

    out = []
    for name in SOURCES:
        img = getattr(skimage.data, name)()
        if img.ndim == 2:
            img = np.repeat(img[:, :, None], 3, axis=2)
        out.append(img[:, :, :3])
    left, right, _ = skimage.data.stereo_motorcycle()
    out += [left, right]
    return out


def _write_crops(directory: Path, count: int, size: int, rng: np.random.Generator, sources) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        src = sources[rng.integers(len(sources))]
        h, w = src.shape[:2]
        side = int(rng.integers(min(96, h, w), min(h, w) + 1))
        top = int(rng.integers(0, h - side + 1))
        left = int(rng.integers(0, w - side + 1))
        crop = src[top : top + side, left : left + side]
        if rng.random() < 0.5:
            crop = crop[:, ::-1]
        Image.fromarray(np.ascontiguousarray(crop)).resize((size, size), Image.BILINEAR).save(
            directory / f"img_{i:05d}.png"
        )


def make_desk_dataset(root, n_train: int = 2000, n_test: int = 200, size: int = 96, seed: int = 0) -> Path:
    root = Path(root)
    sources = _sources()
    rng = np.random.default_rng(seed)
    _write_crops(root / "train", n_train, size, rng, sources)
    _write_crops(root / "test", n_test, size, rng, sources)
    return root


def desk_config(adv_mode: str, epochs: int = 30, seed: int = 0) -> RunConfig:
    return RunConfig.from_mapping(
        {
            "preset": "small",
            "epochs": epochs,
            "adv_mode": adv_mode,
            "adv_weight": 0.040,
            "seed": seed,
            "batch_size": 32,
            "permanent_every": 1000,
            "sample_count": 0,
        }
    )


def run_desk(root, out, epochs: int = 30, seed: int = 0) -> dict:
    """Train both models on ``root/train`` and compare them on ``root/test``."""
    root, out = Path(root), Path(out)
    results = {}
    train_handle = None
    for name, mode in (("rec", "off"), ("rec_adv", "fixed")):
        cfg = desk_config(mode, epochs, seed)
        run_dir = out / name
        ckpt_path = run_dir / "ckpt" / "last.pt"
        done = ckpt_path.is_file() and (run_dir / "config.copy").is_file() and (
            (run_dir / "config.copy").read_text() == cfg.to_text()
        )
        if done:
            done = load_checkpoint(ckpt_path)["epoch"] == epochs
        if not done:
            if train_handle is None:
                train_handle = load_dataset(root, "train", full_size=cfg.full_size)
            run_dir.mkdir(parents=True, exist_ok=True)
            train(
                cfg.train_config(),
                train_handle,
                run_dir,
                cfg.generator_config(),
                cfg.discriminator_config(),
                cfg.mask_spec(),
            )
            (run_dir / "config.copy").write_text(cfg.to_text())
        ckpt = load_checkpoint(ckpt_path)
        g, d = networks_from_checkpoint(ckpt)
        mask = cfg.mask_spec()
        test = load_dataset(root, "test", full_size=cfg.full_size)
        report = evaluate(g, d, test, mask, ckpt["means"], batch_size=50)
        outputs = [gx for _, _, gx, _ in generate(g, test, mask, ckpt["means"], batch_size=50)]
        energy = band_gradient_energy(torch.cat(outputs), mask)
        results[name] = {
            "mean_mse": report.mean_mse,
            "mean_band_mse": report.mean_band_mse,
            "mean_realism": report.mean_realism,
            "band_gradient_energy": energy,
        }
        if "ground_truth_band_gradient_energy" not in results:
            targets = [x for _, _, _, x in generate(lambda t: t, test, mask, ckpt["means"], batch_size=50)]
            results["ground_truth_band_gradient_energy"] = band_gradient_energy(torch.cat(targets), mask)
    (out / "desk_results.json").write_text(json.dumps(results, indent=2))
    return results


if __name__ == "__main__":
    import logging
    import sys

    logging.basicConfig(level=logging.INFO)
    root = Path(sys.argv[1])
    if not (root / "train").is_dir():
        make_desk_dataset(root)
    print(json.dumps(run_desk(root, Path(sys.argv[2]), epochs=int(sys.argv[3]) if len(sys.argv) > 3 else 30), indent=2))
