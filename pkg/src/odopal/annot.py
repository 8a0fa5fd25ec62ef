"""Annotation formats: YOLO segmentation text, COCO JSON and label rasters.

Polygons are kept in pixel coordinates. Bounding boxes are always derived
from the polygon, never read back from a file.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage


class AnnotationError(ValueError):
    """Structurally invalid annotation input; the message carries the location."""


class BodyPart(IntEnum):
    HEAD = 0
    THORAX = 1
    ABDOMEN = 2
    WINGS = 3

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_name(cls, name: str) -> "BodyPart":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown body part {name!r}") from None


Point = tuple[float, float]


@dataclass(frozen=True)
class PartAnnotation:
    part: BodyPart
    polygon: tuple[Point, ...]
    score: float = 1.0
    # COCO annotation id; polygons split from one multi-polygon share it
    instance_id: int | None = None

    def __post_init__(self):
        if len(self.polygon) < 3:
            raise AnnotationError(f"polygon needs at least 3 vertices, got {len(self.polygon)}")
        if not 0.0 <= self.score <= 1.0:
            raise AnnotationError(f"score {self.score} outside [0, 1]")

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        xs = [p[0] for p in self.polygon]
        ys = [p[1] for p in self.polygon]
        x0, y0 = min(xs), min(ys)
        return (x0, y0, max(xs) - x0, max(ys) - y0)


@dataclass
class AnnotationSet:
    image_id: str
    width: int
    height: int
    annotations: list[PartAnnotation] = field(default_factory=list)
    file_name: str | None = None

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise AnnotationError(f"image {self.image_id}: dims must be positive, got {self.width}x{self.height}")

    @property
    def dims(self) -> tuple[int, int]:
        return (self.width, self.height)

    @property
    def stem(self) -> str:
        return Path(self.file_name).stem if self.file_name else self.image_id


def _check_in_bounds(polygon: Sequence[Point], width: int, height: int, where: str) -> None:
    for x, y in polygon:
        if not (0.0 <= x <= width and 0.0 <= y <= height):
            raise AnnotationError(f"{where}: vertex ({x}, {y}) outside image {width}x{height}")


# --------------------------------------------------------------------------
# YOLO segmentation


def parse_yolo_seg(label_text: str, image_dims: tuple[int, int]) -> list[PartAnnotation]:
    width, height = image_dims
    if width <= 0 or height <= 0:
        raise AnnotationError(f"image dims must be positive, got {image_dims}")
    out = []
    for lineno, line in enumerate(label_text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        try:
            cls = int(tokens[0])
        except ValueError:
            raise AnnotationError(f"line {lineno}: class id {tokens[0]!r} is not an integer") from None
        if cls not in BodyPart._value2member_map_:
            raise AnnotationError(f"line {lineno}: unknown class {cls}")
        coords = tokens[1:]
        if len(coords) % 2:
            raise AnnotationError(f"line {lineno}: odd number of coordinates ({len(coords)})")
        if len(coords) < 6:
            raise AnnotationError(f"line {lineno}: polygon needs at least 3 vertices")
        try:
            vals = [float(c) for c in coords]
        except ValueError as exc:
            raise AnnotationError(f"line {lineno}: {exc}") from None
        for v in vals:
            if not (0.0 <= v <= 1.0):
                raise AnnotationError(f"line {lineno}: coordinate {v} outside [0, 1]")
        poly = tuple((vals[i] * width, vals[i + 1] * height) for i in range(0, len(vals), 2))
        out.append(PartAnnotation(BodyPart(cls), poly))
    return out


def write_yolo_seg(aset: AnnotationSet) -> str:
    lines = []
    for ann in aset.annotations:
        parts = [str(int(ann.part))]
        for x, y in ann.polygon:
            parts.append(f"{x / aset.width:.6f}")
            parts.append(f"{y / aset.height:.6f}")
        lines.append(" ".join(parts) + "\n")
    return "".join(lines)


# --------------------------------------------------------------------------
# COCO


def parse_coco(json_text: str, require_score: bool = False) -> list[AnnotationSet]:
    """Parse a COCO-style document into one :class:`AnnotationSet` per image.

    Multi-polygon segmentations become one :class:`PartAnnotation` per polygon,
    all sharing part, score and ``instance_id``. With ``require_score`` every
    annotation must carry a ``score`` field (prediction files).
    """
    try:
        doc = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise AnnotationError(f"malformed JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise AnnotationError("$: expected a JSON object")
    for key in ("images", "annotations", "categories"):
        if not isinstance(doc.get(key, []), list):
            raise AnnotationError(f"$.{key}: expected an array")

    cat_map: dict[int, BodyPart] = {}
    for i, cat in enumerate(doc.get("categories", [])):
        name = str(cat.get("name", ""))
        try:
            cat_map[cat["id"]] = BodyPart.from_name(name)
        except (KeyError, ValueError):
            raise AnnotationError(f"$.categories[{i}]: unknown category {name!r}") from None

    sets: dict[object, AnnotationSet] = {}
    for i, img in enumerate(doc.get("images", [])):
        try:
            iid = img["id"]
            sets[iid] = AnnotationSet(str(iid), int(img["width"]), int(img["height"]),
                                      file_name=img.get("file_name"))
        except KeyError as exc:
            raise AnnotationError(f"$.images[{i}]: missing field {exc.args[0]!r}") from None

    for i, ann in enumerate(doc.get("annotations", [])):
        where = f"$.annotations[{i}]"
        iid = ann.get("image_id")
        if iid not in sets:
            raise AnnotationError(f"{where}: unknown image id {iid}")
        if ann.get("category_id") not in cat_map:
            raise AnnotationError(f"{where}: unknown category id {ann.get('category_id')}")
        if require_score and "score" not in ann:
            raise AnnotationError(f"{where}: missing field 'score'")
        seg = ann.get("segmentation")
        if not isinstance(seg, list) or not seg:
            raise AnnotationError(f"{where}.segmentation: expected a non-empty polygon list")
        aset = sets[iid]
        part = cat_map[ann["category_id"]]
        score = float(ann.get("score", 1.0))
        for j, flat in enumerate(seg):
            if not isinstance(flat, list) or len(flat) % 2 or len(flat) < 6:
                raise AnnotationError(f"{where}.segmentation[{j}]: need an even list of >= 6 numbers")
            poly = tuple((float(flat[q]), float(flat[q + 1])) for q in range(0, len(flat), 2))
            _check_in_bounds(poly, aset.width, aset.height, f"{where}.segmentation[{j}]")
            try:
                aset.annotations.append(PartAnnotation(part, poly, score, ann.get("id")))
            except AnnotationError as exc:
                raise AnnotationError(f"{where}: {exc}") from None
    return list(sets.values())


def write_coco(sets: Sequence[AnnotationSet], include_scores: bool = False) -> str:
    numeric = all(s.image_id.isdigit() for s in sets)
    if numeric and len({int(s.image_id) for s in sets}) != len(sets):
        numeric = False
    images, annotations = [], []
    ann_id = 1
    for idx, s in enumerate(sets, start=1):
        iid = int(s.image_id) if numeric else idx
        images.append({"id": iid, "width": s.width, "height": s.height,
                       "file_name": s.file_name or s.image_id})
        for a in s.annotations:
            x, y, w, h = a.bbox
            entry = {
                "id": ann_id,
                "image_id": iid,
                "category_id": int(a.part) + 1,
                "segmentation": [[c for xy in a.polygon for c in xy]],
                "bbox": [x, y, w, h],
                "area": polygon_area(a.polygon),
                "iscrowd": 0,
            }
            if include_scores or a.score != 1.0:
                entry["score"] = a.score
            annotations.append(entry)
            ann_id += 1
    categories = [{"id": int(p) + 1, "name": p.label} for p in BodyPart]
    return json.dumps({"images": images, "annotations": annotations, "categories": categories}, indent=1)


def polygon_area(polygon: Sequence[Point]) -> float:
    """Absolute shoelace area."""
    acc = 0.0
    n = len(polygon)
    for i in range(n):
        x0, y0 = polygon[i]
        x1, y1 = polygon[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return abs(acc) / 2.0


# --------------------------------------------------------------------------
# label rasters

# raw container: b"ODLR" + uint32 width + uint32 height (little endian) + row-major uint8 labels
RAW_MAGIC = b"ODLR"


def read_label_raster(path: str | Path) -> np.ndarray:
    """Load a label raster as a ``(height, width)`` uint8 array with values 0..4.

    ``.lbl`` files use the raw container above; anything else goes through
    Pillow (PNG, TIFF, ...) and must be single channel.
    """
    path = Path(path)
    if path.suffix.lower() == ".lbl":
        data = path.read_bytes()
        if data[:4] != RAW_MAGIC or len(data) < 12:
            raise AnnotationError(f"{path}: not a raw label raster")
        w, h = struct.unpack("<II", data[4:12])
        if len(data) != 12 + w * h:
            raise AnnotationError(f"{path}: expected {w * h} label bytes, got {len(data) - 12}")
        labels = np.frombuffer(data, dtype=np.uint8, offset=12).reshape(h, w).copy()
    else:
        from PIL import Image

        with Image.open(path) as im:
            if im.mode not in ("L", "P", "I", "I;16", "1"):
                raise AnnotationError(f"{path}: label raster must be single channel, got mode {im.mode}")
            labels = np.asarray(im)
        if labels.max(initial=0) > 255:
            raise AnnotationError(f"{path}: label values exceed 8 bits")
        labels = labels.astype(np.uint8)
    _validate_labels(labels, str(path))
    return labels


def write_label_raster(path: str | Path, labels: np.ndarray) -> None:
    path = Path(path)
    labels = np.asarray(labels, dtype=np.uint8)
    _validate_labels(labels, str(path))
    if path.suffix.lower() == ".lbl":
        h, w = labels.shape
        path.write_bytes(RAW_MAGIC + struct.pack("<II", w, h) + labels.tobytes())
    else:
        from PIL import Image

        Image.fromarray(labels, mode="L").save(path)


def _validate_labels(labels: np.ndarray, where: str) -> None:
    if labels.ndim != 2 or labels.size == 0:
        raise AnnotationError(f"{where}: label raster must be a non-empty 2-D array")
    if labels.max() > 4:
        raise AnnotationError(f"{where}: label value {int(labels.max())} outside 0..4")


# Boundary following on the pixel-corner lattice. Directions: 0=+x, 1=+y, 2=-x, 3=-y
# (y grows downward). The walk keeps the component on its right-hand side.
_STEP = ((1, 0), (0, 1), (-1, 0), (0, -1))


def _inside(mask: np.ndarray, x: int, y: int) -> bool:
    return 0 <= y < mask.shape[0] and 0 <= x < mask.shape[1] and bool(mask[y, x])


def _ahead_pixels(d: int, x: int, y: int) -> tuple[tuple[int, int], tuple[int, int]]:
    # pixels to the right and left of the edge leaving corner (x, y) in direction d
    if d == 0:
        return (x, y), (x, y - 1)
    if d == 1:
        return (x - 1, y), (x, y)
    if d == 2:
        return (x - 1, y - 1), (x - 1, y)
    return (x, y - 1), (x - 1, y - 1)


def trace_outer_boundary(mask: np.ndarray) -> list[tuple[int, int]]:
    """Outer contour of a 4-connected pixel blob as corner coordinates.

    Starts at the top-left corner of the first foreground pixel in row-major
    order and follows cracks between foreground and background, turning right
    whenever possible. Collinear vertices are dropped.
    """
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        return []
    sx, sy = int(xs[0]), int(ys[0])
    x, y, d = sx, sy, 0
    verts = [(x, y)]
    while True:
        x += _STEP[d][0]
        y += _STEP[d][1]
        if (x, y) == (sx, sy) and d == 3:
            break
        # prefer right turn, then straight, then left, then back
        for nd in ((d + 1) % 4, d, (d + 3) % 4, (d + 2) % 4):
            right, left = _ahead_pixels(nd, x, y)
            if _inside(mask, *right) and not _inside(mask, *left):
                break
        if nd != d:
            verts.append((x, y))
        d = nd
        if (x, y) == (sx, sy) and d == 0:
            break
    if verts[-1] == verts[0] and len(verts) > 1:
        verts.pop()
    return verts


def raster_to_annotations(labels: np.ndarray, image_id: str = "raster") -> AnnotationSet:
    """Turn each 4-connected region of a nonzero label into one polygon annotation."""
    labels = np.asarray(labels)
    _validate_labels(labels, image_id)
    h, w = labels.shape
    aset = AnnotationSet(image_id, w, h)
    four = ndimage.generate_binary_structure(2, 1)
    found = []
    for value in range(1, 5):
        comp, _ = ndimage.label(labels == value, structure=four)
        for idx, sl in enumerate(ndimage.find_objects(comp), start=1):
            blob = comp[sl] == idx
            oy, ox = sl[0].start, sl[1].start
            first = np.argmax(blob.ravel())
            found.append((oy + first // blob.shape[1], ox + first % blob.shape[1], value, blob, ox, oy))
    # row-major order of each component's first pixel
    found.sort(key=lambda t: (t[0], t[1]))
    for _, _, value, blob, ox, oy in found:
        poly = tuple((float(x + ox), float(y + oy)) for x, y in trace_outer_boundary(blob))
        aset.annotations.append(PartAnnotation(BodyPart(value - 1), poly))
    return aset


def annotations_to_raster(aset: AnnotationSet) -> np.ndarray:
    """Paint annotations into a label raster; later annotations overwrite earlier ones."""
    from .maskops import rasterize_polygon

    out = np.zeros((aset.height, aset.width), dtype=np.uint8)
    for a in aset.annotations:
        out[rasterize_polygon(a.polygon, aset.dims)] = int(a.part) + 1
    return out


# --------------------------------------------------------------------------
# dataset split


def apportion(total: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of ``total`` by ``ratios``.

    Remainder ties go to the earlier position.
    """
    if not ratios:
        raise ValueError("ratios must not be empty")
    if any(r < 0 or not math.isfinite(r) for r in ratios):
        raise ValueError(f"ratios must be finite and non-negative, got {tuple(ratios)}")
    s = float(sum(ratios))
    if s <= 0:
        raise ValueError("ratios must not all be zero")
    quotas = [total * r / s for r in ratios]
    sizes = [math.floor(q) for q in quotas]
    left = total - sum(sizes)
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[:left]:
        sizes[i] += 1
    return sizes


def split_dataset(items: Iterable[str], ratios: Sequence[float] = (5, 1, 1), seed: int = 0) -> tuple[list[str], ...]:
    """Shuffle ``items`` with a seeded generator and cut them by ``ratios``."""
    items = list(items)
    sizes = apportion(len(items), ratios)
    perm = np.random.default_rng(seed).permutation(len(items))
    shuffled = [items[i] for i in perm]
    out, start = [], 0
    for size in sizes:
        out.append(shuffled[start:start + size])
        start += size
    return tuple(out)
