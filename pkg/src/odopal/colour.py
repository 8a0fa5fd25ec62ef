"""Dominant-colour palettes and mean colour statistics for body parts."""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .annot import BodyPart
from .kernels import assign_labels, transfer_pass

DEFAULT_K = 5
DEFAULT_TOL = 1e-4
DEFAULT_MAX_ITER = 100
DEFAULT_N_INIT = 20


@dataclass(frozen=True)
class HsvTriple:
    h: float  # degrees, [0, 360)
    s: float
    v: float

    def to_8bit(self) -> tuple[float, float, float]:
        """The 8-bit convention used by common imaging libraries: (h/2, s*255, v*255)."""
        return (self.h / 2.0, self.s * 255.0, self.v * 255.0)


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    iterations: int
    inertia_history: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class Palette:
    entries: tuple[tuple[tuple[int, int, int], float], ...]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def colours(self) -> list[tuple[int, int, int]]:
        return [rgb for rgb, _ in self.entries]

    @property
    def frequencies(self) -> list[float]:
        return [f for _, f in self.entries]


@dataclass(frozen=True)
class PartColourStats:
    part: BodyPart
    pixel_count: int
    mean_rgb: tuple[float, float, float]
    mean_hsv: HsvTriple


# --------------------------------------------------------------------------
# k-means


def _kmeanspp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centres = [points[rng.integers(n)]]
    d2 = ((points - centres[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # every point already coincides with a centre
            centres.append(centres[0])
            continue
        idx = rng.choice(n, p=d2 / total)
        centres.append(points[idx])
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(centres, dtype=np.float64)


def _forgy(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    # k distinct rows drawn uniformly (with repeats only when n < k)
    n = points.shape[0]
    idx = rng.choice(n, size=k, replace=n < k)
    return points[idx].astype(np.float64)


def _update(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    k = centroids.shape[0]
    counts = np.bincount(labels, minlength=k)
    sums = np.column_stack([np.bincount(labels, weights=points[:, c], minlength=k)
                            for c in range(points.shape[1])])
    out = centroids.copy()
    nz = counts > 0
    out[nz] = sums[nz] / counts[nz, None]
    return out


def _lloyd(points, centroids, tol, max_iter):
    k = centroids.shape[0]
    history = []
    labels = None
    it = 0
    while it < max_iter:
        it += 1
        new_labels, d2 = assign_labels(points, centroids)
        counts = np.bincount(new_labels, minlength=k)
        for j in np.nonzero(counts == 0)[0]:
            far = int(np.argmax(d2))
            if d2[far] <= 0.0:
                break
            counts[new_labels[far]] -= 1
            new_labels[far] = j
            centroids[j] = points[far]
            d2[far] = 0.0
        history.append(float(d2.sum()))
        if labels is not None and np.array_equal(labels, new_labels):
            break
        labels = new_labels
        moved = _update(points, labels, centroids)
        shift = float(np.sqrt(((moved - centroids) ** 2).sum(axis=1)).max())
        centroids = moved
        if shift < tol:
            break
    if labels is None:
        labels, _ = assign_labels(points, centroids)
    centroids = _update(points, labels, centroids)
    inertia = float(((points - centroids[labels]) ** 2).sum())
    centroids, labels, inertia = _refine(points, labels, centroids, inertia, history)
    return centroids, labels, inertia, it, history


def _refine(points, labels, centroids, inertia, history, max_passes=100):
    """Hartigan-style single-point transfers until a full pass moves nothing.

    A transfer-stable solution is also stable under Lloyd's update, but Lloyd
    fixed points are often not transfer-stable; this escapes many of them.
    """
    k = centroids.shape[0]
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    centroids = np.ascontiguousarray(centroids, dtype=np.float64)
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    min_gain = 1e-12 * max(inertia, 1.0)
    for _ in range(max_passes):
        if transfer_pass(points, labels, centroids, counts, min_gain) == 0:
            break
        # recompute exactly to shed the drift of incremental updates
        centroids = _update(points, labels, centroids)
        inertia = float(((points - centroids[labels]) ** 2).sum())
        history.append(inertia)
    return centroids, labels, inertia


def kmeans(points, k: int, seed: int = 0, tol: float = DEFAULT_TOL,
           max_iter: int = DEFAULT_MAX_ITER, n_init: int = DEFAULT_N_INIT) -> KMeansResult:
    """Lloyd's algorithm plus single-point transfers, best of ``n_init`` restarts.

    Even restarts use k-means++ seeding, odd ones pick distinct points
    uniformly.

    All restarts draw from one generator seeded with ``seed``. Empty clusters
    are reseeded with the point farthest from its centroid. On return every
    non-empty cluster's centroid is the mean of its members and ``inertia``
    is the sum of squared member-to-centroid distances.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.shape[0] == 0:
        raise ValueError("kmeans needs at least one point")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    rng = np.random.default_rng(seed)
    best = None
    for r in range(max(1, n_init)):
        # alternate seeding schemes: D^2 seeding tends to pick the same
        # outliers every time, uniform seeding explores other basins
        init = _kmeanspp(pts, k, rng) if r % 2 == 0 else _forgy(pts, k, rng)
        run = _lloyd(pts, init, tol, max_iter)
        if best is None or run[2] < best[2]:
            best = run
    centroids, labels, inertia, iterations, history = best
    return KMeansResult(centroids, labels, inertia, iterations, history)


# --------------------------------------------------------------------------
# palettes


def _pack(rgb: tuple[int, int, int]) -> int:
    return (rgb[0] << 16) | (rgb[1] << 8) | rgb[2]


def build_palette(part_pixels, k: int = DEFAULT_K, seed: int = 0, tol: float = DEFAULT_TOL,
                  max_iter: int = DEFAULT_MAX_ITER) -> Palette:
    """Cluster a part's pixels in RGB and return the frequency-ordered palette.

    Centroids are rounded to 8-bit; clusters that round to the same colour are
    merged. Entries are ordered by descending frequency, then ascending packed RGB.
    """
    px = np.asarray(part_pixels, dtype=np.float64).reshape(-1, 3)
    if px.shape[0] == 0:
        raise ValueError("no pixels to cluster (empty mask?)")
    res = kmeans(px, k, seed=seed, tol=tol, max_iter=max_iter)
    counts = np.bincount(res.labels, minlength=k)
    merged: dict[tuple[int, int, int], int] = {}
    for j in np.nonzero(counts)[0]:
        rgb = tuple(int(c) for c in np.clip(np.floor(res.centroids[j] + 0.5), 0, 255))
        merged[rgb] = merged.get(rgb, 0) + int(counts[j])
    total = px.shape[0]
    ordered = sorted(merged.items(), key=lambda kv: (-kv[1], _pack(kv[0])))
    return Palette(tuple((rgb, n / total) for rgb, n in ordered))


# --------------------------------------------------------------------------
# HSV


def rgb_to_hsv(rgb: Sequence[float]) -> HsvTriple:
    r, g, b = (float(c) for c in rgb)
    mx, mn = max(r, g, b), min(r, g, b)
    delta = mx - mn
    v = mx / 255.0
    s = delta / mx if mx > 0 else 0.0
    if delta == 0:
        h = 0.0
    elif mx == r:
        h = 60.0 * (((g - b) / delta) % 6.0)
    elif mx == g:
        h = 60.0 * ((b - r) / delta + 2.0)
    else:
        h = 60.0 * ((r - g) / delta + 4.0)
    if h >= 360.0:
        h -= 360.0
    return HsvTriple(h, s, v)


def rgb_to_hsv_array(pixels) -> np.ndarray:
    """Vectorised :func:`rgb_to_hsv`; returns an ``(n, 3)`` array of (h, s, v)."""
    px = np.asarray(pixels, dtype=np.float64).reshape(-1, 3)
    r, g, b = px[:, 0], px[:, 1], px[:, 2]
    mx = px.max(axis=1)
    mn = px.min(axis=1)
    delta = mx - mn
    v = mx / 255.0
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(mx > 0, delta / mx, 0.0)
        safe = np.where(delta == 0, 1.0, delta)
        h = np.where(mx == r, 60.0 * (((g - b) / safe) % 6.0),
                     np.where(mx == g, 60.0 * ((b - r) / safe + 2.0),
                              60.0 * ((r - g) / safe + 4.0)))
    h = np.where(delta == 0, 0.0, h)
    h = np.where(h >= 360.0, h - 360.0, h)
    return np.column_stack([h, s, v])


def hsv_to_rgb(hsv: HsvTriple) -> tuple[float, float, float]:
    """Inverse hexcone conversion, channels on the 0..255 scale."""
    c = hsv.v * hsv.s
    hp = (hsv.h % 360.0) / 60.0
    x = c * (1 - abs(hp % 2 - 1))
    sector = int(hp) % 6
    r, g, b = [(c, x, 0), (x, c, 0), (0, c, x), (0, x, c), (x, 0, c), (c, 0, x)][sector]
    m = hsv.v - c
    return ((r + m) * 255.0, (g + m) * 255.0, (b + m) * 255.0)


def mean_part_colour(part: BodyPart, part_pixels) -> PartColourStats:
    """Per-part mean RGB and mean HSV.

    Hue is a saturation-weighted circular mean, so grey pixels do not pull
    it around; S and V are plain arithmetic means.
    """
    px = np.asarray(part_pixels, dtype=np.float64).reshape(-1, 3)
    n = px.shape[0]
    if n == 0:
        raise ValueError("no pixels to average (empty mask?)")
    hsv = rgb_to_hsv_array(px)
    w = hsv[:, 1]
    rad = np.radians(hsv[:, 0])
    sin_sum = float((w * np.sin(rad)).sum())
    cos_sum = float((w * np.cos(rad)).sum())
    wsum = float(w.sum())
    if wsum <= 0.0:
        h = 0.0
    else:
        if abs(sin_sum) <= 1e-12 * wsum:
            sin_sum = 0.0
        h = math.degrees(math.atan2(sin_sum, cos_sum)) % 360.0
        if h >= 360.0:
            h = 0.0
    s = float(hsv[:, 1].mean())
    v = float(hsv[:, 2].mean())
    if s == 0.0:
        h = 0.0
    mean_rgb = tuple(float(c) for c in px.mean(axis=0))
    return PartColourStats(BodyPart(part), n, mean_rgb, HsvTriple(h, s, v))


def derive_seed(seed: int, image_id: str, part: BodyPart) -> int:
    """Stable per-(image, part) seed: ``seed XOR crc32("image_id:part")``."""
    return int(seed) ^ zlib.crc32(f"{image_id}:{BodyPart(part).label}".encode())


# --------------------------------------------------------------------------
# panels


def _bar_edges(freqs: Sequence[float], width: int) -> list[int]:
    edges = [0]
    acc = 0.0
    for f in freqs:
        acc += f
        edges.append(min(width, int(math.floor(acc * width + 0.5))))
    edges[-1] = width
    return edges


def render_palette_panel(image: np.ndarray, per_part, bar_width: int | None = None,
                         background: tuple[int, int, int] = (255, 255, 255)) -> np.ndarray:
    """Compose the original image over one band per part.

    Each band shows the masked part on black next to a palette bar whose
    segment widths follow the frequencies, dominant colour on the left. With
    no parts the result is a copy of ``image``.
    """
    img = np.asarray(image, dtype=np.uint8)
    h, w = img.shape[:2]
    if not per_part:
        return img.copy()
    bw = w if bar_width is None else int(bar_width)
    panel = np.empty((h * (1 + len(per_part)), w + bw, 3), dtype=np.uint8)
    panel[:] = background
    panel[:h, :w] = img
    for i, (_, mask, palette) in enumerate(per_part):
        if mask.shape != (h, w):
            raise ValueError(f"mask {mask.shape[1]}x{mask.shape[0]} does not match image {w}x{h}")
        top = h * (i + 1)
        band = panel[top:top + h]
        band[:, :w] = 0
        band[:, :w][mask] = img[mask]
        edges = _bar_edges(palette.frequencies, bw)
        for (rgb, _), x0, x1 in zip(palette.entries, edges[:-1], edges[1:]):
            band[:, w + x0:w + x1] = rgb
    return panel
