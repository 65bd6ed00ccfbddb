"""Command-line entry points for the whole pipeline.

Exit codes: 0 on success, 1 on runtime failure (one-line ``error: ...``
on stderr), 2 on bad usage (argparse).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import imaging, rle
from .checkpoint import load_checkpoint, save_checkpoint
from .data import SyntheticConfig, load_index
from .model import ModelConfig, build
from .training import TrainConfig, evaluate, predict, train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pneumoseg",
                                     description="pneumothorax segmentation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic shapes dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--n-samples", type=int, default=16)
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--empty-fraction", type=float, default=0.3)
    p.add_argument("--noise-std", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train a model from a CSV index")
    p.add_argument("--index", required=True, help="CSV index file")
    p.add_argument("--images", required=True, help="image directory")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--history", help="training history CSV output path")
    p.add_argument("--image-size", type=int, default=256)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--base-channels", type=int, default=16)
    p.add_argument("--blocks-per-stage", type=int, default=2)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--max-epochs", type=int, required=True)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--min-area", type=int, default=32)
    p.add_argument("--augment", action="store_true")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("eval", help="evaluate a checkpoint against an index")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--min-area", type=int, default=32)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--image-size", type=int, help="override checkpoint image size")
    p.add_argument("--report", help="write the report here instead of stdout")

    p = sub.add_parser("predict", help="predict a mask for one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--min-area", type=int, default=32)
    p.add_argument("--image-size", type=int, help="override checkpoint image size")
    p.add_argument("--out-overlay", help="write the RGB overlay PNG here")
    p.add_argument("--out-mask", help="write the binary mask PNG here")

    p = sub.add_parser("encode", help="RLE-encode a mask image (nonzero = 1)")
    p.add_argument("--mask", required=True, help="mask PNG path")

    p = sub.add_parser("decode", help="decode an RLE string to a mask image")
    p.add_argument("--rle", required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--out", required=True, help="mask PNG output path")

    p = sub.add_parser("serve", help="start the HTTP inference/review service")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--host", default=os.environ.get("PNEUMOSEG_HOST", "127.0.0.1"))
    p.add_argument("--port", type=int,
                   default=int(os.environ.get("PNEUMOSEG_PORT", "8000")))
    p.add_argument("--data-dir",
                   default=os.environ.get("PNEUMOSEG_DATA_DIR", "pneumoseg-data"))
    p.add_argument("--ui-dir", help="static directory for the review UI")

    return parser


def _read_index(args) -> data_mod.DatasetIndex:
    csv_bytes = Path(args.index).read_bytes()
    size = getattr(args, "image_size", None)
    return load_index(csv_bytes, args.images, image_size=size or 256)


def _checkpoint_size(meta: dict, override) -> int:
    if override:
        return int(override)
    return int(meta.get("image_size", 256))


def cmd_synth(args) -> int:
    cfg = SyntheticConfig(n_samples=args.n_samples, image_size=args.image_size,
                          empty_fraction=args.empty_fraction,
                          noise_std=args.noise_std, seed=args.seed)
    index = data_mod.generate_synthetic(cfg, args.out)
    print(f"wrote {len(index)} samples under {args.out} (index.csv + images/)")
    return 0


def cmd_train(args) -> int:
    index = _read_index(args)
    if index.skipped:
        print(f"skipped {len(index.skipped)} unusable samples", file=sys.stderr)
    model = build(ModelConfig(depth=args.depth, base_channels=args.base_channels,
                              blocks_per_stage=args.blocks_per_stage, seed=args.seed))
    cfg = TrainConfig(max_epochs=args.max_epochs, lr=args.lr,
                      batch_size=args.batch_size, patience=args.patience,
                      val_fraction=args.val_fraction, theta=args.theta,
                      min_area=args.min_area, augment=args.augment, seed=args.seed)
    ckpt, history = train(model, index, cfg)
    Path(args.out).write_bytes(ckpt)
    if args.history:
        Path(args.history).write_text(history.to_csv(), encoding="utf-8")
    best = history.per_epoch[history.best_epoch - 1]
    print(f"best epoch {history.best_epoch}: val_loss {best.val_loss:.6f} "
          f"val_dice {best.val_dice:.6f} val_iou {best.val_iou:.6f} "
          f"({'early stop' if history.stopped_early else 'ran to max_epochs'})")
    return 0


def cmd_eval(args) -> int:
    model, meta = load_checkpoint(Path(args.checkpoint).read_bytes())
    args.image_size = _checkpoint_size(meta, args.image_size)
    index = _read_index(args)
    report = evaluate(model, index, args.theta, args.min_area, args.batch_size)
    text = report.to_text()
    if args.report:
        Path(args.report).write_text(text, encoding="utf-8")
        print(f"mean_dice {report.mean_dice:.6f} mean_iou {report.mean_iou:.6f}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_predict(args) -> int:
    model, meta = load_checkpoint(Path(args.checkpoint).read_bytes())
    size = _checkpoint_size(meta, args.image_size)
    try:
        raw = Path(args.image).read_bytes()
    except OSError as exc:
        raise RuntimeError(f"cannot read image {args.image}: {exc}") from exc
    try:
        result = predict(model, raw, theta=args.theta, min_area=args.min_area, size=size)
    except data_mod.DataError as exc:
        raise RuntimeError(f"{args.image}: {exc}") from exc
    if args.out_overlay:
        Path(args.out_overlay).write_bytes(imaging.encode_rgb_png(result.overlay))
    if args.out_mask:
        Path(args.out_mask).write_bytes(imaging.encode_gray_png(result.mask * 255))
    print(result.rle)
    return 0


def cmd_encode(args) -> int:
    arr = imaging.decode_gray(Path(args.mask).read_bytes())
    print(rle.encode((arr > 0).astype(np.uint8)))
    return 0


def cmd_decode(args) -> int:
    mask = rle.decode(args.rle, args.width, args.height)
    Path(args.out).write_bytes(imaging.encode_gray_png(mask * 255))
    print(f"wrote {args.width}x{args.height} mask with {int(mask.sum())} pixels to {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.checkpoint, args.data_dir, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "encode": cmd_encode,
    "decode": cmd_decode,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except KeyboardInterrupt:
        return 130
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
