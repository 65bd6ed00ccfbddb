"""Dataset index loading, deterministic splits, batching, synthetic data.

The on-disk layout is a CSV index with header ``ImageId,EncodedPixels``
next to a directory of ``<ImageId>.png`` grayscale images. Masks are RLE
strings over each image's native dimensions; "-1" marks an empty mask.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imaging, rle
from .autodiff import Tensor

CSV_HEADER = ("ImageId", "EncodedPixels")
AUGMENT_MIN_FRAC = 0.8


class DataError(Exception):
    pass


@dataclass
class DatasetIndex:
    entries: list  # (id, rle_string)
    root: Path
    image_size: int = 256
    skipped: list = field(default_factory=list)  # (id, reason)

    def __len__(self):
        return len(self.entries)

    def ids(self) -> list[str]:
        return [sid for sid, _ in self.entries]


def image_path(root: Path, sample_id: str) -> Path:
    return Path(root) / f"{sample_id}.png"


def load_index(csv_bytes: bytes, root, image_size: int = 256) -> DatasetIndex:
    """Parse the CSV index, merging duplicate-id rows by pixelwise OR.

    Rows whose image file is missing or corrupt are dropped into the
    ``skipped`` report instead of failing the load.
    """
    root = Path(root)
    reader = csv.reader(io.StringIO(csv_bytes.decode("utf-8")))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty index: no header row") from None
    if tuple(h.strip() for h in header[:2]) != CSV_HEADER:
        raise DataError(f"bad index header {header!r}, expected {','.join(CSV_HEADER)}")

    rows: dict[str, list[str]] = {}
    order: list[str] = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) < 2 or not row[0].strip():
            raise DataError(f"malformed index row at line {lineno}: {row!r}")
        sid = row[0].strip()
        if sid not in rows:
            rows[sid] = []
            order.append(sid)
        rows[sid].append(row[1].strip())

    entries, skipped = [], []
    for sid in order:
        path = image_path(root, sid)
        try:
            data = path.read_bytes()
        except OSError:
            skipped.append((sid, "missing image file"))
            continue
        if imaging.detect_corrupt(data):
            skipped.append((sid, "corrupt image file"))
            continue
        arr = imaging.decode_gray(data)
        h, w = arr.shape
        try:
            mask = np.zeros((h, w), dtype=np.uint8)
            for text in rows[sid]:
                mask |= rle.decode(text, w, h)
        except (rle.RleError, ValueError) as exc:
            raise DataError(f"bad RLE for id {sid!r}: {exc}") from exc
        entries.append((sid, rle.encode(mask)))
    return DatasetIndex(entries=entries, root=root, image_size=image_size, skipped=skipped)


def split(index: DatasetIndex, val_fraction: float, seed: int) -> tuple[DatasetIndex, DatasetIndex]:
    """Seeded shuffle, then round(n * val_fraction) entries become validation."""
    if not (0.0 < val_fraction < 1.0):
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    n = len(index.entries)
    perm = np.random.default_rng(seed).permutation(n)
    n_val = int(np.rint(n * val_fraction))
    val_entries = [index.entries[i] for i in perm[:n_val]]
    train_entries = [index.entries[i] for i in perm[n_val:]]
    make = lambda e: DatasetIndex(entries=e, root=index.root, image_size=index.image_size)
    return make(train_entries), make(val_entries)


def load_sample(index: DatasetIndex, sid: str, rle_text: str,
                rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Load and preprocess one sample to (image float32, mask uint8) at image_size.

    Preprocessing: normalize to [0,1], histogram equalization, resize to the
    configured size. When ``rng`` is given, a random crop augmentation is
    applied to image and mask together.
    """
    path = image_path(index.root, sid)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read image for id {sid!r}: {exc}") from exc
    if imaging.detect_corrupt(data):
        raise DataError(f"corrupt image for id {sid!r}")
    raw = imaging.decode_gray(data)
    h, w = raw.shape
    size = index.image_size
    img = imaging.resize_bilinear(imaging.equalize_hist(imaging.normalize01(raw)), size, size)
    mask = imaging.resize_nearest(rle.decode(rle_text, w, h), size, size)
    if rng is not None:
        img, mask = imaging.random_crop_resize(img, mask, rng, AUGMENT_MIN_FRAC)
    return img, mask


def batches(index: DatasetIndex, batch_size: int, shuffle_seed: int, augment: bool = False):
    """Yield (image, mask) tensor pairs of shape Nx1xSxS covering one epoch.

    Batch order is the seeded shuffle; the last batch may be short. With
    ``augment`` each sample goes through a random crop driven by the same
    epoch RNG.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    rng = np.random.default_rng(shuffle_seed)
    perm = rng.permutation(len(index.entries))
    size = index.image_size
    for lo in range(0, len(perm), batch_size):
        chunk = perm[lo : lo + batch_size]
        imgs = np.empty((len(chunk), 1, size, size), dtype=np.float32)
        masks = np.empty((len(chunk), 1, size, size), dtype=np.float32)
        for row, i in enumerate(chunk):
            sid, rle_text = index.entries[i]
            img, mask = load_sample(index, sid, rle_text, rng=rng if augment else None)
            imgs[row, 0] = img
            masks[row, 0] = mask
        yield Tensor(imgs), Tensor(masks)


@dataclass(frozen=True)
class SyntheticConfig:
    n_samples: int
    image_size: int = 64
    empty_fraction: float = 0.3
    noise_std: float = 0.05
    seed: int = 0

    def validate(self):
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be positive, got {self.n_samples}")
        if self.image_size < 4:
            raise ValueError(f"image_size too small: {self.image_size}")
        if not (0.0 <= self.empty_fraction <= 1.0):
            raise ValueError(f"empty_fraction must be in [0,1], got {self.empty_fraction}")


def ellipse_mask(size: int, cx: float, cy: float, ax: float, ay: float) -> np.ndarray:
    """Filled axis-aligned ellipse interior on a size x size grid."""
    ys, xs = np.mgrid[0:size, 0:size]
    return ((((xs - cx) / ax) ** 2 + ((ys - cy) / ay) ** 2) <= 1.0).astype(np.uint8)


def generate_synthetic(cfg: SyntheticConfig, out_dir) -> DatasetIndex:
    """Write a reproducible shapes dataset: noisy background, one bright
    ellipse per positive sample, mask equal to the ellipse interior."""
    cfg.validate()
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_samples
    size = cfg.image_size
    n_empty = int(np.rint(n * cfg.empty_fraction))
    empty_flags = np.zeros(n, dtype=bool)
    empty_flags[rng.permutation(n)[:n_empty]] = True

    entries = []
    for i in range(n):
        sid = f"synth{i:04d}"
        background = rng.uniform(0.10, 0.30)
        img = rng.normal(background, cfg.noise_std, size=(size, size))
        if empty_flags[i]:
            mask = np.zeros((size, size), dtype=np.uint8)
        else:
            cx = rng.uniform(0.30, 0.70) * size
            cy = rng.uniform(0.30, 0.70) * size
            ax = rng.uniform(0.12, 0.25) * size
            ay = rng.uniform(0.12, 0.25) * size
            mask = ellipse_mask(size, cx, cy, ax, ay)
            img += mask * rng.uniform(0.35, 0.55)
        raw = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
        image_path(images_dir, sid).write_bytes(imaging.encode_gray_png(raw))
        entries.append((sid, rle.encode(mask)))

    lines = [",".join(CSV_HEADER)]
    lines.extend(f"{sid},{text}" for sid, text in entries)
    (out_dir / "index.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return DatasetIndex(entries=entries, root=images_dir, image_size=size)
