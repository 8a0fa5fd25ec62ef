"""Per-image driver: masks -> part pixels -> palette and mean colour."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from . import colour, maskops
from .annot import AnnotationSet, BodyPart

DEFAULT_EXCLUDE = frozenset({BodyPart.WINGS})


@dataclass
class PartResult:
    part: BodyPart
    mask: np.ndarray
    palette: colour.Palette
    stats: colour.PartColourStats


def extract_parts(image: np.ndarray, aset: AnnotationSet, record_id: str | None = None, *,
                  k: int = colour.DEFAULT_K, seed: int = 0, tol: float = colour.DEFAULT_TOL,
                  max_iter: int = colour.DEFAULT_MAX_ITER, threshold: int = maskops.DEFAULT_THRESHOLD,
                  exclude: Iterable[BodyPart] = DEFAULT_EXCLUDE) -> list[PartResult]:
    """Palette and colour stats for each annotated part of one image.

    Polygons of the same part are merged into one mask drawn at the
    annotation's resolution, resized to the image, then passed through the
    grey/threshold step. Excluded parts (wings by default) are dropped before
    any pixels are read. Parts whose mask ends up empty are omitted.
    """
    record_id = aset.stem if record_id is None else record_id
    skip = frozenset(exclude)
    h, w = image.shape[:2]
    by_part: dict[BodyPart, list] = {}
    for a in aset.annotations:
        if a.part not in skip:
            by_part.setdefault(a.part, []).append(a.polygon)
    out = []
    for part in sorted(by_part):
        mask = maskops.part_mask(by_part[part], aset.dims, (w, h), threshold)
        pixels = maskops.apply_mask(image, mask)
        if pixels.shape[0] == 0:
            continue
        palette = colour.build_palette(pixels, k, seed=colour.derive_seed(seed, record_id, part),
                                       tol=tol, max_iter=max_iter)
        out.append(PartResult(part, mask, palette, colour.mean_part_colour(part, pixels)))
    return out
