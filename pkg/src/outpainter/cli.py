"""Command-line entry point: ``outpainter <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from outpainter import data as data_mod
from outpainter.compositing import BlendSpec, blend, outpaint, outpaint_and_blend, recursive_outpaint
from outpainter.config import RunConfig, read_config_file
from outpainter.data import MaskSpec, load_dataset, preprocess, read_image, write_image
from outpainter.errors import ConfigError, OutpainterError
from outpainter.evaluation import evaluate, select_extremes, write_gallery
from outpainter.harmonization import (
    DEFAULT_INJECT_SCALE,
    DEFAULT_MAX_SIDE,
    DEFAULT_MIN_SIZE,
    DEFAULT_SCALE_FACTOR,
    InjectionSpec,
    available_refiners,
    harmonize,
    load_or_train_pyramid,
)
from outpainter.plotting import plot_learning_curves
from outpainter.training import (
    load_checkpoint,
    mask_from_checkpoint,
    networks_from_checkpoint,
    resume,
    train,
)

logger = logging.getLogger("outpainter")

SCHEDULE_HELP = (
    "adversarial weight mode: 'off' (reconstruction loss only), 'scheduled' "
    "(0.001 for epochs 1-10, 0.005 for 11-30, 0.015 for 31-60, 0.040 afterwards) "
    "or 'fixed' (constant --adv-weight)"
)


class CLIError(OutpainterError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError(message)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    defaults = RunConfig()
    for key in RunConfig.keys():
        value = getattr(defaults, key)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        help_text = SCHEDULE_HELP if key == "adv_mode" else f"default: {value}"
        if key == "adv_mode":
            help_text += f" (default: {value})"
        p.add_argument("--" + key.replace("_", "-"), dest="cfg_" + key, default=None, metavar="V", help=help_text)


def _config_from_args(args) -> RunConfig:
    values = read_config_file(args.config) if args.config else {}
    values.update({k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None})
    return RunConfig.from_mapping(values)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="outpainter", description="Context-encoder image outpainting toolkit.", allow_abbrev=False)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare", help="index a dataset and write channel statistics", allow_abbrev=False)
    p.add_argument("--data", required=True, help="dataset root (train split in <root>/train or <root>)")
    p.add_argument("--out", required=True, help="stats file to write")
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--full-size", type=int, default=192)

    p = sub.add_parser(
        "train",
        help="train the outpainting GAN",
        description="Train G and D with alternating Adam updates. " + SCHEDULE_HELP + ".",
        allow_abbrev=False,
    )
    p.add_argument("--config", help="flat 'key = value' config file")
    p.add_argument("--data", required=True, help="dataset root")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--stats", help="stats file from 'prepare' (skips recomputing channel means)")
    _add_config_flags(p)

    p = sub.add_parser("eval", help="MSE / realism report and extreme-sample galleries", allow_abbrev=False)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test", choices=data_mod.SPLITS)
    p.add_argument("--disc-ckpt", help="take the discriminator for realism scores from this checkpoint")
    p.add_argument("--k", type=int, default=4, help="images per extreme-sample gallery")
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=16)

    p = sub.add_parser("outpaint", help="outpaint photos with a trained generator", allow_abbrev=False)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="inp", required=True, help="image file or directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--recursive", type=int, default=1, metavar="K", help="number of recursive outpainting steps")
    p.add_argument("--keep-raw", action="store_true", help="also write the unblended generator output")
    p.add_argument("--blend-width", type=int, default=None)

    p = sub.add_parser("harmonize", help="refine a raw outpainting with a pyramid fitted to the original", allow_abbrev=False)
    p.add_argument("--original", required=True)
    p.add_argument("--raw", required=True)
    p.add_argument("--inject-scale", type=int, default=DEFAULT_INJECT_SCALE)
    p.add_argument("--out", required=True, help="output image file")
    p.add_argument("--refiner", default="baseline", help=f"one of {available_refiners()}")
    p.add_argument("--scale-factor", type=float, default=DEFAULT_SCALE_FACTOR)
    p.add_argument("--min-size", type=int, default=DEFAULT_MIN_SIZE)
    p.add_argument("--max-side", type=int, default=DEFAULT_MAX_SIDE, help="refuse larger originals (0 disables)")
    p.add_argument("--cache-dir", help="pyramid cache directory")

    p = sub.add_parser("plot", help="plot learning curves from metrics.csv", allow_abbrev=False)
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--restart", type=int, action="append", default=[], help="epoch to mark (repeatable)")
    return parser


# --------------------------------------------------------------------------
# subcommands


def cmd_prepare(args) -> None:
    handle = load_dataset(args.data, "train", args.limit, args.full_size)
    means = data_mod.channel_means(handle)
    data_mod.write_stats(args.out, handle, means)
    print(f"size={handle.size} skipped={len(handle.skipped)} stats={args.out}")


def cmd_train(args) -> None:
    cfg = _config_from_args(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.copy").write_text(cfg.to_text(), encoding="utf-8")
    handle = load_dataset(args.data, "train", cfg.limit or None, cfg.full_size)
    if args.resume:
        ckpt = load_checkpoint(args.resume)
        if mask_from_checkpoint(ckpt) != cfg.mask_spec():
            raise ConfigError("config geometry does not match the checkpoint being resumed")
        result = resume(args.resume, handle, out, cfg.train_config())
    else:
        means = None
        if args.stats:
            st = data_mod.read_stats(args.stats)
            means = (st["mean_r"], st["mean_g"], st["mean_b"])
        result = train(
            cfg.train_config(),
            handle,
            out,
            cfg.generator_config(),
            cfg.discriminator_config(),
            cfg.mask_spec(),
            means,
            extra={"blend_width": cfg.blend_width, "run_config": cfg.to_text()},
        )
    print(f"epochs={result.rows[-1].epoch if result.rows else 0} checkpoint={result.checkpoint} metrics={result.metrics}")


def _blend_spec(ckpt: dict, override: int | None, mask: MaskSpec) -> BlendSpec:
    if override is not None:
        return BlendSpec(override)
    width = ckpt.get("extra", {}).get("blend_width")
    return BlendSpec(width if width is not None else min(16, mask.keep_size // 2))


def cmd_eval(args) -> None:
    ckpt = load_checkpoint(args.ckpt)
    g, d = networks_from_checkpoint(ckpt)
    if args.disc_ckpt:
        _, d = networks_from_checkpoint(load_checkpoint(args.disc_ckpt))
    mask = mask_from_checkpoint(ckpt)
    means = tuple(ckpt["means"])
    handle = load_dataset(args.data, args.split, args.limit, mask.full_size)
    report = evaluate(g, d, handle, mask, means, args.batch_size, model_id=Path(args.ckpt).stem)
    out = Path(args.out)
    report.write_csv(out / "report.csv")
    summary = report.summary()
    (out / "summary.txt").write_text(summary + "\n", encoding="utf-8")
    print(summary)

    k = min(args.k, report.size)
    b = _blend_spec(ckpt, None, mask)
    index = {img_id: i for i, img_id in enumerate(handle.image_ids)}
    for criterion in ("low_mse", "high_mse", "high_realism"):
        rows = []
        for img_id in select_extremes(report, k, criterion):
            x = handle.image(index[img_id])
            masked, _ = data_mod.make_masked_input(x, mask, means)
            raw = outpaint(g, masked, mask, means)
            rows.append([masked, raw, blend(x, raw, mask, b), x])
        if rows:
            write_gallery(out / f"{criterion}.png", rows)


def _load_photo(path, size: int) -> np.ndarray:
    return preprocess(read_image(path), size)


def cmd_outpaint(args) -> None:
    ckpt = load_checkpoint(args.ckpt)
    g, _ = networks_from_checkpoint(ckpt)
    mask = mask_from_checkpoint(ckpt)
    means = tuple(ckpt["means"])
    b = _blend_spec(ckpt, args.blend_width, mask)
    if args.recursive < 1:
        raise ConfigError("--recursive must be >= 1")
    out = Path(args.out)
    for path in data_mod.list_images(args.inp):
        photo = _load_photo(path, mask.keep_size)
        composite, raw = outpaint_and_blend(g, photo, mask, means, b)
        write_image(out / f"{path.stem}.png", composite)
        if args.keep_raw:
            write_image(out / f"{path.stem}_raw.png", raw)
        if args.recursive > 1:
            steps = recursive_outpaint(g, photo, args.recursive, mask, means, b)
            for i, step in enumerate(steps, start=1):
                write_image(out / f"{path.stem}_step{i:02d}.png", step)
        print(f"{path} -> {out / (path.stem + '.png')}")


def cmd_harmonize(args) -> None:
    pyramid = load_or_train_pyramid(
        args.original,
        args.cache_dir,
        args.scale_factor,
        args.min_size,
        args.refiner,
        args.max_side or None,
    )
    raw = data_mod.from_uint8(read_image(args.raw))
    refined = harmonize(pyramid, raw, InjectionSpec(args.inject_scale))
    write_image(args.out, refined)
    h, w = refined.shape[:2]
    print(f"{args.out} {w}x{h} scales={[s[0] for s in pyramid.sizes]}")


def cmd_plot(args) -> None:
    path = plot_learning_curves(args.csv, args.out, args.restart)
    print(path)


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "eval": cmd_eval,
    "outpaint": cmd_outpaint,
    "harmonize": cmd_harmonize,
    "plot": cmd_plot,
}


def _fail(exc: BaseException) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
    return 2 if isinstance(exc, CLIError) else 1


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except CLIError as exc:
        return _fail(exc)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (OutpainterError, OSError, ValueError) as exc:
        return _fail(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
