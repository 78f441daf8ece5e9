"""Image datasets: deterministic synthetic generator and directory loading.

Synthetic images cycle through three families (smooth random cosine fields,
oriented ramps, checkerboards) so a codec sees both low-frequency and blocky
content. Generation is keyed by (seed, index), so regenerating any subset is
bit-identical. The train/validation split hashes the image index, giving a
stable ~90/10 partition independent of dataset size.
"""

from __future__ import annotations

import os

import numpy as np

from .linalg import RngStream, _splitmix64

__all__ = ["synth_dataset", "load_images", "split_indices", "DatasetError"]

_IMAGE_EXTS = (".png", ".ppm")


class DatasetError(ValueError):
    """Dataset directory missing, empty, or containing undecodable files."""


def _smooth_field(rng: RngStream, h: int, w: int) -> np.ndarray:
    y = (np.arange(h) + 0.5) / h
    x = (np.arange(w) + 0.5) / w
    img = np.zeros((h, w, 3))
    for c in range(3):
        acc = np.zeros((h, w))
        for u in range(3):
            for v in range(3):
                a = 2.0 * rng.uniform(()) - 1.0
                acc += a * np.outer(np.cos(np.pi * u * y), np.cos(np.pi * v * x))
        img[:, :, c] = acc
    lo, hi = img.min(), img.max()
    if hi > lo:
        img = (img - lo) / (hi - lo)
    else:
        img = np.full_like(img, 0.5)
    return img


def _ramp(rng: RngStream, h: int, w: int) -> np.ndarray:
    theta = 2.0 * np.pi * rng.uniform(())
    yy, xx = np.meshgrid(np.arange(h) / max(h - 1, 1), np.arange(w) / max(w - 1, 1), indexing="ij")
    t = np.cos(theta) * xx + np.sin(theta) * yy
    t = (t - t.min()) / max(t.max() - t.min(), 1e-12)
    img = np.zeros((h, w, 3))
    for c in range(3):
        c0, c1 = rng.uniform(()), rng.uniform(())
        img[:, :, c] = c0 + (c1 - c0) * t
    return img


def _checker(rng: RngStream, h: int, w: int) -> np.ndarray:
    cell = int(rng.integers(1, 3, ())) * 2  # 2 or 4 pixel cells
    col_a = rng.uniform((3,))
    col_b = rng.uniform((3,))
    yy, xx = np.meshgrid(np.arange(h) // cell, np.arange(w) // cell, indexing="ij")
    mask = ((yy + xx) % 2 == 0)[:, :, None]
    return np.where(mask, col_a, col_b)


_FAMILIES = (_smooth_field, _ramp, _checker)


def synth_dataset(n: int, h: int, w: int, seed: int) -> list[np.ndarray]:
    """``n`` deterministic (h, w, 3) float64 images with values in [0, 1]."""
    if n < 1:
        raise ValueError("need at least one image")
    root = RngStream(seed, 0)
    images = []
    for i in range(n):
        family = _FAMILIES[i % len(_FAMILIES)]
        images.append(np.clip(family(root.derive(i), h, w), 0.0, 1.0))
    return images


def load_images(directory: str, h: int, w: int) -> list[np.ndarray]:
    """Load every PNG/PPM under ``directory`` (sorted by filename).

    Images larger than the configured dimensions are center-cropped; smaller
    ones are rejected so no resampling kernel ever enters the data path.
    """
    from PIL import Image, UnidentifiedImageError

    if not os.path.isdir(directory):
        raise DatasetError(f"not a directory: {directory}")
    names = sorted(f for f in os.listdir(directory) if f.lower().endswith(_IMAGE_EXTS))
    if not names:
        raise DatasetError(f"no PNG/PPM images found in {directory}")
    images = []
    for name in names:
        path = os.path.join(directory, name)
        try:
            with Image.open(path) as im:
                arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
        except (UnidentifiedImageError, OSError) as exc:
            raise DatasetError(f"cannot decode {path}: {exc}") from exc
        ih, iw = arr.shape[:2]
        if ih < h or iw < w:
            raise DatasetError(f"{path} is {ih}x{iw}, smaller than configured {h}x{w}")
        top, left = (ih - h) // 2, (iw - w) // 2
        images.append(arr[top : top + h, left : left + w, :])
    return images


def split_indices(n: int) -> tuple[list[int], list[int]]:
    """Deterministic ~90/10 train/validation split by index hash."""
    train, val = [], []
    for i in range(n):
        (val if _splitmix64(i) % 10 == 0 else train).append(i)
    return train, val
