"""Image preprocessing and prediction post-processing.

Grayscale images are float32 arrays in [0,1] of shape (H, W); binary
masks are uint8 {0,1} arrays; RGB images are uint8 arrays of shape
(H, W, 3). PNG is the one raster container used everywhere (disk, CLI,
HTTP API): 8-bit grayscale for images and probability maps, 24-bit RGB
for overlays.
"""

from __future__ import annotations

import io
from collections import deque

import numpy as np
from PIL import Image


# ---------------------------------------------------------------------------
# PNG container


def decode_gray(data: bytes) -> np.ndarray:
    """Decode image bytes to a uint8 grayscale array; raises on corrupt input."""
    with Image.open(io.BytesIO(data)) as img:
        img.load()
        if img.width < 1 or img.height < 1:
            raise ValueError("image has zero dimensions")
        return np.asarray(img.convert("L"), dtype=np.uint8)


def encode_gray_png(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(arr, dtype=np.uint8), mode="L").save(buf, format="PNG")
    return buf.getvalue()


def encode_rgb_png(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(arr, dtype=np.uint8), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def detect_corrupt(data: bytes) -> bool:
    """True when the container fails to parse or the pixel payload is short."""
    try:
        with Image.open(io.BytesIO(data)) as img:
            if img.width < 1 or img.height < 1:
                return True
            img.load()
    except Exception:
        return True
    return False


# ---------------------------------------------------------------------------
# preprocessing


def normalize01(raw: np.ndarray) -> np.ndarray:
    """uint8 image -> float32 in [0,1]."""
    return np.asarray(raw, dtype=np.float32) / 255.0


def resize_bilinear(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resize with corner-aligned sampling; output stays in [0,1]."""
    if out_w < 1 or out_h < 1:
        raise ValueError(f"bad output dims {out_w}x{out_h}")
    img = np.asarray(img, dtype=np.float32)
    h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.copy()

    xs = np.linspace(0.0, w - 1.0, out_w)
    ys = np.linspace(0.0, h - 1.0, out_h)
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = (xs - x0).astype(np.float32)
    wy = (ys - y0).astype(np.float32)

    rows = img[:, x0] * (1.0 - wx) + img[:, x1] * wx
    out = rows[y0, :] * (1.0 - wy)[:, None] + rows[y1, :] * wy[:, None]
    return np.clip(out, 0.0, 1.0)


def resize_nearest(mask: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Nearest-neighbor resize with corner-aligned index mapping; stays {0,1}."""
    if out_w < 1 or out_h < 1:
        raise ValueError(f"bad output dims {out_w}x{out_h}")
    mask = np.asarray(mask, dtype=np.uint8)
    h, w = mask.shape
    if (h, w) == (out_h, out_w):
        return mask.copy()
    xs = np.rint(np.linspace(0.0, w - 1.0, out_w)).astype(int)
    ys = np.rint(np.linspace(0.0, h - 1.0, out_h)).astype(int)
    return mask[np.ix_(ys, xs)]


def equalize_hist(img: np.ndarray) -> np.ndarray:
    """Global 256-bin histogram equalization with minimum-CDF shift.

    A pixel at quantized level v maps to (CDF(v) - CDF_min) / (1 - CDF_min)
    where CDF_min is the smallest nonzero CDF value. The mapping is
    monotone; constant images pass through unchanged.
    """
    img = np.asarray(img, dtype=np.float32)
    levels = np.rint(img * 255.0).astype(np.int32)
    hist = np.bincount(levels.ravel(), minlength=256)
    cdf = np.cumsum(hist) / levels.size
    occupied = np.flatnonzero(hist)
    cdf_min = cdf[occupied[0]]
    if cdf_min >= 1.0:  # single occupied bin
        return img.copy()
    mapping = ((cdf - cdf_min) / (1.0 - cdf_min)).astype(np.float32)
    return np.clip(mapping[levels], 0.0, 1.0)


def random_crop_resize(img: np.ndarray, mask: np.ndarray, rng: np.random.Generator,
                       min_frac: float) -> tuple[np.ndarray, np.ndarray]:
    """Crop a random sub-window (same for image and mask), resize back.

    The window side fraction is uniform in [min_frac, 1]; the image goes
    through bilinear resize, the mask through nearest-neighbor.
    """
    if not (0.0 < min_frac <= 1.0):
        raise ValueError(f"min_frac must be in (0, 1], got {min_frac}")
    if img.shape != mask.shape:
        raise ValueError(f"image {img.shape} and mask {mask.shape} dims differ")
    h, w = img.shape
    frac = rng.uniform(min_frac, 1.0)
    cw = max(1, int(round(frac * w)))
    ch = max(1, int(round(frac * h)))
    if (cw, ch) == (w, h):
        return img.copy(), mask.copy()
    x0 = int(rng.integers(0, w - cw + 1))
    y0 = int(rng.integers(0, h - ch + 1))
    sub_img = img[y0 : y0 + ch, x0 : x0 + cw]
    sub_mask = mask[y0 : y0 + ch, x0 : x0 + cw]
    return resize_bilinear(sub_img, w, h), resize_nearest(sub_mask, w, h)


# ---------------------------------------------------------------------------
# post-processing


def binarize(prob: np.ndarray, theta: float) -> np.ndarray:
    """Threshold a probability map: pixel is 1 iff p >= theta."""
    if not (0.0 < theta < 1.0):
        raise ValueError(f"theta must be in (0, 1), got {theta}")
    return (np.asarray(prob) >= theta).astype(np.uint8)


def remove_small_components(mask: np.ndarray, min_area: int) -> np.ndarray:
    """Zero out 4-connected components smaller than min_area pixels."""
    if min_area < 0:
        raise ValueError(f"min_area must be >= 0, got {min_area}")
    mask = np.asarray(mask, dtype=np.uint8)
    if min_area == 0:
        return mask.copy()
    h, w = mask.shape
    out = mask.copy()
    seen = np.zeros((h, w), dtype=bool)
    for sy in range(h):
        for sx in range(w):
            if not mask[sy, sx] or seen[sy, sx]:
                continue
            queue = deque([(sy, sx)])
            seen[sy, sx] = True
            component = []
            while queue:
                y, x = queue.popleft()
                component.append((y, x))
                for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        queue.append((ny, nx))
            if len(component) < min_area:
                for y, x in component:
                    out[y, x] = 0
    return out


def overlay(img: np.ndarray, mask: np.ndarray, alpha: float = 0.4) -> np.ndarray:
    """Blend mask pixels toward pure red over the grayscale image."""
    if img.shape != mask.shape:
        raise ValueError(f"image {img.shape} and mask {mask.shape} dims differ")
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    gray = np.asarray(img, dtype=np.float32) * 255.0
    rgb = np.repeat(gray[:, :, None], 3, axis=2)
    hit = np.asarray(mask, dtype=bool)
    rgb[hit, 0] = (1.0 - alpha) * gray[hit] + alpha * 255.0
    rgb[hit, 1] = (1.0 - alpha) * gray[hit]
    rgb[hit, 2] = (1.0 - alpha) * gray[hit]
    return np.rint(rgb).astype(np.uint8)
