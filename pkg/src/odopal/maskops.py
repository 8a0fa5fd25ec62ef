"""Mask algebra for the palette pipeline.

Masks are boolean ``(height, width)`` arrays, images are ``(height, width, 3)``
uint8 arrays. Dimensions passed as tuples are ``(width, height)``.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .kernels import polygon_fill

DEFAULT_THRESHOLD = 127


def rasterize_polygon(polygon: Sequence[tuple[float, float]], dims: tuple[int, int]) -> np.ndarray:
    """Even-odd fill sampled at pixel centres ``(col + 0.5, row + 0.5)``."""
    if len(polygon) < 3:
        raise ValueError(f"polygon needs at least 3 vertices, got {len(polygon)}")
    width, height = dims
    pts = np.asarray(polygon, dtype=np.float64)
    return polygon_fill(pts[:, 0], pts[:, 1], width, height)


def resize_mask(mask: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbour resize; target pixel (c, r) reads source (c*sw//tw, r*sh//th)."""
    tw, th = target
    if tw <= 0 or th <= 0:
        raise ValueError(f"target dims must be positive, got {target}")
    sh, sw = mask.shape
    if (sw, sh) == (tw, th):
        return mask.copy()
    rows = (np.arange(th) * sh) // th
    cols = (np.arange(tw) * sw) // tw
    return mask[rows[:, None], cols[None, :]]


def to_grayscale(mask: np.ndarray) -> np.ndarray:
    return np.where(mask, np.uint8(255), np.uint8(0))


def threshold(gray: np.ndarray, t: int = DEFAULT_THRESHOLD) -> np.ndarray:
    """Strictly-greater threshold: value ``> t`` is set."""
    if not 0 <= t <= 255:
        raise ValueError(f"threshold must be in [0, 255], got {t}")
    return np.asarray(gray) > t


def apply_mask(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """RGB triples under the set bits, row-major, as an ``(n, 3)`` uint8 array.

    Background pixels are dropped rather than blacked out so they cannot form
    a cluster of their own downstream.
    """
    if image.shape[:2] != mask.shape:
        raise ValueError(f"image is {image.shape[1]}x{image.shape[0]} but mask is {mask.shape[1]}x{mask.shape[0]}")
    return image[mask.astype(bool)]


def part_mask(polygons: Sequence[Sequence[tuple[float, float]]], mask_dims: tuple[int, int],
              image_dims: tuple[int, int], t: int = DEFAULT_THRESHOLD) -> np.ndarray:
    """Union of a part's polygons, resized to the image and round-tripped through grey + threshold."""
    m = np.zeros((mask_dims[1], mask_dims[0]), dtype=bool)
    for poly in polygons:
        m |= rasterize_polygon(poly, mask_dims)
    m = resize_mask(m, image_dims)
    return threshold(to_grayscale(m), t)


def load_rgb(path: str | Path) -> np.ndarray:
    """Decode PNG/JPEG to 8-bit RGB; alpha is dropped and grey promoted."""
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def save_png(path: str | Path, image: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(np.asarray(image, dtype=np.uint8)).save(path, format="PNG")
