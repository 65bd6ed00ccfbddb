"""Overlap metrics (Dice, IoU), differentiable BCE loss, report aggregation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, _node

BCE_EPS = 1e-7


def _counts(x: np.ndarray, y: np.ndarray) -> tuple[int, int, int]:
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape:
        raise ValueError(f"mask dims differ: {x.shape} vs {y.shape}")
    inter = int(np.logical_and(x, y).sum())
    return inter, int(np.count_nonzero(x)), int(np.count_nonzero(y))


def dice(x: np.ndarray, y: np.ndarray) -> float:
    """2|X n Y| / (|X| + |Y|); 1.0 when both masks are empty."""
    inter, nx, ny = _counts(x, y)
    if nx + ny == 0:
        return 1.0
    return 2.0 * inter / (nx + ny)


def iou(x: np.ndarray, y: np.ndarray) -> float:
    """|X n Y| / |X u Y|; 1.0 when both masks are empty."""
    inter, nx, ny = _counts(x, y)
    union = nx + ny - inter
    if union == 0:
        return 1.0
    return inter / union


def bce_loss(p: Tensor, y) -> Tensor:
    """Mean binary cross-entropy of a probability tensor against {0,1} targets.

    Logs are clamped with eps 1e-7 for stability; the result is a shape-[1]
    tensor differentiable w.r.t. p.
    """
    target = y.data if isinstance(y, Tensor) else np.asarray(y)
    target = target.astype(p.data.dtype)
    if target.shape != p.data.shape:
        raise ValueError(f"prediction shape {p.data.shape} vs target shape {target.shape}")
    pc = np.clip(p.data, BCE_EPS, 1.0 - BCE_EPS)
    n = pc.size
    loss = -(target * np.log(pc) + (1.0 - target) * np.log1p(-pc)).mean(dtype=p.data.dtype)

    def back(g):
        from .autodiff import _accumulate
        _accumulate(p, g[0] * (pc - target) / (pc * (1.0 - pc)) / n)

    return _node(loss.reshape(1), (p,), back)


@dataclass
class EvalReport:
    per_sample: list  # (sample_id, dice, iou)
    mean_dice: float
    mean_iou: float
    theta: float
    min_area: int
    n_samples: int

    def to_text(self) -> str:
        """Header `n theta min_area mean_dice mean_iou`, then `id dice iou` rows."""
        lines = [f"{self.n_samples} {self.theta:.6f} {self.min_area} "
                 f"{self.mean_dice:.6f} {self.mean_iou:.6f}"]
        for sid, d, i in self.per_sample:
            lines.append(f"{sid} {d:.6f} {i:.6f}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "theta": self.theta,
            "min_area": self.min_area,
            "mean_dice": self.mean_dice,
            "mean_iou": self.mean_iou,
            "per_sample": [{"id": sid, "dice": d, "iou": i} for sid, d, i in self.per_sample],
        }


def aggregate(entries, theta: float, min_area: int) -> EvalReport:
    """Unweighted per-sample means of (id, dice, iou) entries."""
    entries = list(entries)
    if not entries:
        raise ValueError("cannot aggregate an empty entry list")
    mean_dice = float(np.mean([d for _, d, _ in entries]))
    mean_iou = float(np.mean([i for _, _, i in entries]))
    return EvalReport(per_sample=entries, mean_dice=mean_dice, mean_iou=mean_iou,
                      theta=theta, min_area=min_area, n_samples=len(entries))
