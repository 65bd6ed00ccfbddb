"""Training loop (Adam, BCE, early stopping) and the inference path."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import data as data_mod
from . import imaging, rle
from .autodiff import Tensor, backward, no_grad
from .checkpoint import save_checkpoint
from .data import DataError, DatasetIndex
from .metrics import EvalReport, aggregate, bce_loss, dice, iou
from .model import UNet
from .optim import Adam


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int
    lr: float = 1e-4
    batch_size: int = 8
    patience: int = 5
    val_fraction: float = 0.2
    theta: float = 0.5
    min_area: int = 32
    augment: bool = False
    seed: int = 0

    def validate(self):
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if not (0.0 < self.val_fraction < 1.0):
            raise ValueError(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        if not (0.0 < self.theta < 1.0):
            raise ValueError(f"theta must be in (0, 1), got {self.theta}")
        if self.min_area < 0:
            raise ValueError(f"min_area must be >= 0, got {self.min_area}")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_dice: float
    val_iou: float


@dataclass
class TrainHistory:
    per_epoch: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss,val_dice,val_iou"]
        for r in self.per_epoch:
            lines.append(f"{r.epoch},{r.train_loss:.6f},{r.val_loss:.6f},"
                         f"{r.val_dice:.6f},{r.val_iou:.6f}")
        return "\n".join(lines) + "\n"


class EarlyStopper:
    """Stops after ``patience`` epochs without the monitored value improving
    by at least ``min_delta``; keeps a snapshot of the best state."""

    def __init__(self, patience: int, min_delta: float = 1e-5):
        if patience < 1:
            raise ValueError(f"patience must be >= 1, got {patience}")
        self.patience = patience
        self.min_delta = min_delta
        self.epoch = 0
        self.wait = 0
        self.best_epoch = 0
        self.best_value = None
        self.best_snapshot = None

    def update(self, value: float, snapshot_fn) -> bool:
        """Record one epoch; returns True when training should stop now.

        ``snapshot_fn`` is called only when the value improved, so callers
        pay for a weight copy only on best epochs.
        """
        self.epoch += 1
        if self.best_value is None or (self.best_value - value) >= self.min_delta:
            self.best_value = value
            self.best_epoch = self.epoch
            self.best_snapshot = snapshot_fn()
            self.wait = 0
            return False
        self.wait += 1
        return self.wait >= self.patience


def _eval_pass(model: UNet, index: DatasetIndex, theta: float, min_area: int,
               batch_size: int = 8) -> tuple[float, EvalReport]:
    """Eval-mode sweep in index order: (pixel-mean BCE, per-sample metric report)."""
    if not index.entries:
        raise DataError("cannot evaluate an empty index")
    size = index.image_size
    loss_sum = 0.0
    n_seen = 0
    entries_out = []
    for lo in range(0, len(index.entries), batch_size):
        chunk = index.entries[lo : lo + batch_size]
        imgs = np.empty((len(chunk), 1, size, size), dtype=np.float32)
        masks = np.empty((len(chunk), 1, size, size), dtype=np.float32)
        for row, (sid, rle_text) in enumerate(chunk):
            img, mask = data_mod.load_sample(index, sid, rle_text)
            imgs[row, 0] = img
            masks[row, 0] = mask
        with no_grad():
            probs = model.forward(Tensor(imgs), "eval")
        loss_sum += float(bce_loss(probs, Tensor(masks)).data[0]) * len(chunk)
        n_seen += len(chunk)
        for row, (sid, _) in enumerate(chunk):
            pred = imaging.remove_small_components(
                imaging.binarize(probs.data[row, 0], theta), min_area)
            truth = masks[row, 0].astype(np.uint8)
            entries_out.append((sid, dice(pred, truth), iou(pred, truth)))
    return loss_sum / n_seen, aggregate(entries_out, theta, min_area)


def evaluate(model: UNet, index: DatasetIndex, theta: float, min_area: int,
             batch_size: int = 8) -> EvalReport:
    """Per-sample Dice/IoU of thresholded, despeckled predictions."""
    return _eval_pass(model, index, theta, min_area, batch_size)[1]


def validation_loss(model: UNet, index: DatasetIndex, batch_size: int = 8) -> float:
    """Pixel-mean eval-mode BCE over an index (batch-order independent)."""
    return _eval_pass(model, index, 0.5, 0, batch_size)[0]


def train(model: UNet, index: DatasetIndex, cfg: TrainConfig) -> tuple[bytes, TrainHistory]:
    """Train with Adam + BCE, early-stop on validation loss, return the
    best-epoch checkpoint (weights restored into the model) and history."""
    cfg.validate()
    if not index.entries:
        raise DataError("dataset index is empty")
    div = 2 ** model.config.depth
    if index.image_size % div:
        raise ValueError(f"image_size {index.image_size} not divisible by 2^depth = {div}")
    train_idx, val_idx = data_mod.split(index, cfg.val_fraction, cfg.seed)
    if not train_idx.entries:
        raise DataError("train split is empty after filtering")
    if not val_idx.entries:
        raise DataError("validation split is empty")

    opt = Adam(model.parameters(), lr=cfg.lr)
    stopper = EarlyStopper(cfg.patience)
    history = TrainHistory()

    for epoch in range(1, cfg.max_epochs + 1):
        loss_sum = 0.0
        n_seen = 0
        for xb, yb in data_mod.batches(train_idx, cfg.batch_size,
                                       shuffle_seed=cfg.seed + epoch, augment=cfg.augment):
            probs = model.forward(xb, "train")
            loss = bce_loss(probs, yb)
            backward(loss)
            opt.step()
            opt.zero_grad()
            nb = xb.shape[0]
            loss_sum += float(loss.data[0]) * nb
            n_seen += nb
        val_loss, report = _eval_pass(model, val_idx, cfg.theta, cfg.min_area, cfg.batch_size)
        history.per_epoch.append(EpochStats(epoch, loss_sum / n_seen, val_loss,
                                            report.mean_dice, report.mean_iou))
        if stopper.update(val_loss, model.state_snapshot):
            history.stopped_early = True
            break

    model.load_snapshot(stopper.best_snapshot)
    history.best_epoch = stopper.best_epoch
    ckpt = save_checkpoint(model, metadata={
        "epoch": stopper.best_epoch,
        "val_loss": f"{stopper.best_value:.6f}",
        "image_size": index.image_size,
    })
    return ckpt, history


@dataclass
class PredictResult:
    image: np.ndarray      # preprocessed grayscale, float32 (S, S)
    prob_map: np.ndarray   # float32 (S, S)
    mask: np.ndarray       # uint8 {0,1} (S, S)
    rle: str
    overlay: np.ndarray    # uint8 (S, S, 3)


def predict(model: UNet, raw_bytes: bytes, theta: float, min_area: int,
            size: int = 256, overlay_alpha: float = 0.4) -> PredictResult:
    """Full inference path: preprocess, forward, threshold, filter, encode."""
    if imaging.detect_corrupt(raw_bytes):
        raise DataError("corrupt or unreadable image")
    div = 2 ** model.config.depth
    if size % div:
        raise ValueError(f"size {size} not divisible by 2^depth = {div}")
    raw = imaging.decode_gray(raw_bytes)
    img = imaging.resize_bilinear(imaging.equalize_hist(imaging.normalize01(raw)), size, size)
    with no_grad():
        probs = model.forward(Tensor(img[None, None]), "eval")
    prob_map = probs.data[0, 0]
    mask = imaging.remove_small_components(imaging.binarize(prob_map, theta), min_area)
    return PredictResult(
        image=img,
        prob_map=prob_map,
        mask=mask,
        rle=rle.encode(mask),
        overlay=imaging.overlay(img, mask, overlay_alpha),
    )
