"""Run-length codec for binary masks in the competition text format.

Pixels are numbered 1-based in column-major order (top to bottom, then
left to right): linear index p maps to col (p-1) // height and row
(p-1) % height. A mask is written as space-separated "start length"
pairs over that ordering; the all-zero mask is the literal "-1".
"""

from __future__ import annotations

import numpy as np

EMPTY_RLE = "-1"


class RleError(ValueError):
    """Malformed RLE text; ``token`` is the 1-based offending token index."""

    def __init__(self, message: str, token: int | None = None):
        if token is not None:
            message = f"{message} (token {token})"
        super().__init__(message)
        self.token = token


def _check_mask(mask: np.ndarray) -> np.ndarray:
    mask = np.asarray(mask)
    if mask.ndim != 2 or mask.shape[0] < 1 or mask.shape[1] < 1:
        raise ValueError(f"mask must be a non-empty 2D array, got shape {mask.shape}")
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("mask values must be 0 or 1")
    return mask.astype(np.uint8, copy=False)


def decode(rle: str, width: int, height: int) -> np.ndarray:
    """Parse an RLE string into an (height, width) uint8 mask of {0,1}."""
    if width < 1 or height < 1:
        raise ValueError(f"bad mask dims {width}x{height}")
    text = rle.strip()
    if text == EMPTY_RLE:
        return np.zeros((height, width), dtype=np.uint8)

    tokens = text.split()
    if not tokens:
        raise RleError("empty RLE string")
    if len(tokens) % 2:
        raise RleError(f"odd token count {len(tokens)}", token=len(tokens))

    total = width * height
    flat = np.zeros(total, dtype=np.uint8)
    prev_end = 0
    for i in range(0, len(tokens), 2):
        try:
            start = int(tokens[i])
        except ValueError:
            raise RleError(f"non-integer token {tokens[i]!r}", token=i + 1) from None
        try:
            length = int(tokens[i + 1])
        except ValueError:
            raise RleError(f"non-integer token {tokens[i + 1]!r}", token=i + 2) from None
        if start < 1 or length < 1:
            raise RleError(f"run ({start}, {length}) not positive", token=i + 1)
        end = start + length - 1
        if end > total:
            raise RleError(f"run ({start}, {length}) exceeds {width}x{height} mask",
                           token=i + 1)
        if start <= prev_end:
            raise RleError(f"run at {start} overlaps or precedes previous run ending at {prev_end}",
                           token=i + 1)
        flat[start - 1 : end] = 1
        prev_end = end
    # column-major: flat index q -> (row q % height, col q // height)
    return flat.reshape(width, height).T


def encode(mask: np.ndarray) -> str:
    """Canonical RLE of a {0,1} mask: maximal runs in increasing start order."""
    mask = _check_mask(mask)
    flat = mask.flatten(order="F")
    padded = np.concatenate([[0], flat, [0]])
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    if edges.size == 0:
        return EMPTY_RLE
    starts = edges[::2] + 1
    lengths = edges[1::2] - edges[::2]
    return " ".join(f"{s} {l}" for s, l in zip(starts, lengths))


def canonicalize(rle: str, width: int, height: int) -> str:
    """Normalize an RLE string: merge adjacent runs, single spaces, canonical order."""
    return encode(decode(rle, width, height))
