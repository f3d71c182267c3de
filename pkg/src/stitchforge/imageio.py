"""Raster I/O and resampling helpers.

Images travel through the pipeline as float64 arrays in [0, 1]; binary masks
as uint8 {0, 1}. On disk everything is 8-bit PNG (value/255).
"""

import hashlib
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import IoError


def to_uint8(arr: np.ndarray) -> np.ndarray:
    """Quantize a [0,1] float raster to uint8 (round to nearest)."""
    return np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)


def from_uint8(arr: np.ndarray) -> np.ndarray:
    return arr.astype(np.float64) / 255.0


def load_image(path) -> np.ndarray:
    """Read an image file as (H, W, 3) float64 in [0, 1]."""
    try:
        with Image.open(path) as im:
            rgb = im.convert("RGB")
            return from_uint8(np.asarray(rgb))
    except (OSError, ValueError) as exc:
        raise IoError(f"cannot read image {path}: {exc}") from exc


def load_gray(path) -> np.ndarray:
    """Read an image file as (H, W) float64 in [0, 1]."""
    try:
        with Image.open(path) as im:
            return from_uint8(np.asarray(im.convert("L")))
    except (OSError, ValueError) as exc:
        raise IoError(f"cannot read image {path}: {exc}") from exc


def load_binary_mask(path) -> np.ndarray:
    """Read a mask file as (H, W) uint8 {0, 1} (threshold at 0.5)."""
    return (load_gray(path) >= 0.5).astype(np.uint8)


def load_auto(path) -> np.ndarray:
    """Read a PNG as (H, W) when stored grayscale, (H, W, 3) otherwise."""
    try:
        with Image.open(path) as im:
            if im.mode in ("L", "I", "I;16", "1"):
                return from_uint8(np.asarray(im.convert("L")))
            return from_uint8(np.asarray(im.convert("RGB")))
    except (OSError, ValueError) as exc:
        raise IoError(f"cannot read image {path}: {exc}") from exc


def save_image(path, arr: np.ndarray) -> None:
    """Write a [0,1] float raster ((H,W) or (H,W,3)) as 8-bit PNG."""
    path = Path(path)
    data = to_uint8(arr)
    mode = "L" if data.ndim == 2 else "RGB"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(data, mode=mode).save(path, format="PNG")
    except OSError as exc:
        raise IoError(f"cannot write image {path}: {exc}") from exc


def save_binary_mask(path, mask: np.ndarray) -> None:
    save_image(path, mask.astype(np.float64))


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def resize_bilinear(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resize with half-pixel-center mapping, edges clamped.

    Accepts (H, W) or (H, W, C); output keeps the layout. An identity-size
    resize reproduces the input exactly.
    """
    squeeze = img.ndim == 2
    a = np.asarray(img, dtype=np.float64)
    if squeeze:
        a = a[:, :, None]
    h, w = a.shape[:2]
    sx = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    sy = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    dx = (sx - x0)[None, :, None]
    dy = (sy - y0)[:, None, None]
    top = a[y0[:, None], x0[None, :]] * (1 - dx) + a[y0[:, None], x1[None, :]] * dx
    bot = a[y1[:, None], x0[None, :]] * (1 - dx) + a[y1[:, None], x1[None, :]] * dx
    out = top * (1 - dy) + bot * dy
    return out[:, :, 0] if squeeze else out
