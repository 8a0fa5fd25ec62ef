"""Box and mask AP/mAP with COCO-style greedy matching and 101-point interpolation."""
from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .annot import AnnotationError, AnnotationSet, BodyPart, parse_coco
from .maskops import rasterize_polygon

IOU_THRESHOLDS = tuple(np.round(np.arange(0.5, 0.951, 0.05), 2).tolist())
RECALL_SAMPLES = np.arange(101) / 100.0
MODES = ("bbox", "mask")


@dataclass
class Instance:
    """One detection or ground-truth object. Ground truth has score 1."""

    image_id: str
    part: BodyPart
    bbox: tuple[float, float, float, float]
    mask: np.ndarray | None = None
    score: float = 1.0


@dataclass
class ModeReport:
    map: float
    map50: float
    map75: float
    ap_per_class: dict[BodyPart, float | None]  # averaged over IOU_THRESHOLDS
    ap50_per_class: dict[BodyPart, float | None]


@dataclass
class EvalReport:
    modes: dict[str, ModeReport] = field(default_factory=dict)

    def __getitem__(self, mode: str) -> ModeReport:
        return self.modes[mode]


# --------------------------------------------------------------------------
# overlap


def iou_bbox(a: Sequence[float], b: Sequence[float]) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    ih = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = iw * ih
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def iou_mask(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


def _iou(d: Instance, g: Instance, mode: str) -> float:
    if mode == "bbox":
        return iou_bbox(d.bbox, g.bbox)
    return iou_mask(d.mask, g.mask)


# --------------------------------------------------------------------------
# AP


def match_detections(dets: Sequence[Instance], gts: Sequence[Instance], iou_threshold: float,
                     mode: str = "bbox") -> list[bool]:
    """True-positive flag for each detection, in descending score order.

    Each detection takes the still-unmatched ground truth of the same image
    with the highest IoU at or above the threshold. Equal scores keep input order.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    by_image = defaultdict(list)
    for g in gts:
        by_image[g.image_id].append(g)
    taken = {img: [False] * len(lst) for img, lst in by_image.items()}
    flags = []
    for i in order:
        d = dets[i]
        cands = by_image.get(d.image_id, [])
        best, best_j = iou_threshold, -1
        for j, g in enumerate(cands):
            if taken[d.image_id][j]:
                continue
            iou = _iou(d, g, mode)
            if iou >= best and (best_j < 0 or iou > best):
                best, best_j = iou, j
        if best_j >= 0:
            taken[d.image_id][best_j] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def ap_from_flags(flags: Sequence[bool], n_gt: int) -> float:
    """101-point interpolated AP on the 0..100 scale."""
    if n_gt == 0:
        raise ValueError("AP undefined without ground truth")
    if not flags:
        return 0.0
    tp = np.cumsum(np.asarray(flags, dtype=np.float64))
    fp = np.cumsum(~np.asarray(flags, dtype=bool))
    recall = tp / n_gt
    precision = tp / (tp + fp)
    # precision envelope: max precision at any recall >= r
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_SAMPLES, side="left")
    sampled = np.where(idx < len(recall), envelope[np.minimum(idx, len(recall) - 1)], 0.0)
    return float(sampled.mean() * 100.0)


def average_precision(dets: Sequence[Instance], gts: Sequence[Instance], part: BodyPart,
                      iou_threshold: float, mode: str = "bbox") -> float | None:
    """AP for one class; ``None`` when the class has no ground truth."""
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1), got {iou_threshold}")
    g = [x for x in gts if x.part == part]
    if not g:
        return None
    d = [x for x in dets if x.part == part]
    return ap_from_flags(match_detections(d, g, iou_threshold, mode), len(g))


def _mean(values: Iterable[float | None]) -> float:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else 0.0


def evaluate(dets: Sequence[Instance], gts: Sequence[Instance], modes: Sequence[str] = MODES) -> EvalReport:
    report = EvalReport()
    for mode in modes:
        table = {t: {p: average_precision(dets, gts, p, t, mode) for p in BodyPart} for t in IOU_THRESHOLDS}
        per_class = {}
        for p in BodyPart:
            vals = [table[t][p] for t in IOU_THRESHOLDS]
            per_class[p] = None if vals[0] is None else float(np.mean(vals))
        report.modes[mode] = ModeReport(
            map=_mean(per_class.values()),
            map50=_mean(table[0.5].values()),
            map75=_mean(table[0.75].values()),
            ap_per_class=per_class,
            ap50_per_class=table[0.5],
        )
    return report


# --------------------------------------------------------------------------
# loading


def instances_from_sets(sets: Iterable[AnnotationSet], with_masks: bool = True) -> list[Instance]:
    """Group polygons back into instances (by COCO annotation id when present)."""
    out = []
    for s in sets:
        groups: dict[object, list] = {}
        for k, a in enumerate(s.annotations):
            key = ("id", a.instance_id) if a.instance_id is not None else ("idx", k)
            groups.setdefault(key, []).append(a)
        for anns in groups.values():
            xs = [x for a in anns for x, _ in a.polygon]
            ys = [y for a in anns for _, y in a.polygon]
            bbox = (min(xs), min(ys), max(xs) - min(xs), max(ys) - min(ys))
            mask = None
            if with_masks:
                mask = np.zeros((s.height, s.width), dtype=bool)
                for a in anns:
                    mask |= rasterize_polygon(a.polygon, s.dims)
            out.append(Instance(s.image_id, anns[0].part, bbox, mask, anns[0].score))
    return out


def load_predictions(text: str, gt_sets: Sequence[AnnotationSet]) -> list[AnnotationSet]:
    """Predictions as a full COCO document, or a bare COCO results list that
    refers to the ground truth's image and category ids. Scores are required.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise AnnotationError(f"malformed JSON: {exc}") from None
    if isinstance(doc, list):
        doc = {
            "images": [{"id": _coco_id(s.image_id), "width": s.width, "height": s.height,
                        "file_name": s.file_name or s.image_id} for s in gt_sets],
            "annotations": doc,
            "categories": [{"id": int(p) + 1, "name": p.label} for p in BodyPart],
        }
    sets = parse_coco(json.dumps(doc), require_score=True)
    known = {s.image_id for s in gt_sets}
    for s in sets:
        if s.image_id not in known:
            raise AnnotationError(f"prediction image id {s.image_id} not in ground truth")
    return sets


def _coco_id(image_id: str):
    return int(image_id) if image_id.isdigit() else image_id


# --------------------------------------------------------------------------
# output

REPORT_COLUMNS = ["mode", "mAP", "mAP50", "mAP75"] + [f"AP-{p.label}" for p in BodyPart] \
    + [f"AP50-{p.label}" for p in BodyPart]


def report_rows(report: EvalReport) -> list[list[str]]:
    rows = []
    for mode, r in report.modes.items():
        row = [mode, f"{r.map:.2f}", f"{r.map50:.2f}", f"{r.map75:.2f}"]
        row += ["" if r.ap_per_class[p] is None else f"{r.ap_per_class[p]:.2f}" for p in BodyPart]
        row += ["" if r.ap50_per_class[p] is None else f"{r.ap50_per_class[p]:.2f}" for p in BodyPart]
        rows.append(row)
    return rows


def report_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    w.writerows(report_rows(report))
    return buf.getvalue()


def report_text(report: EvalReport) -> str:
    """Aligned table; AP-<part> is averaged over IoU 0.50:0.05:0.95, AP50-<part> at 0.50."""
    rows = [REPORT_COLUMNS] + [[c or "-" for c in r] for r in report_rows(report)]
    widths = [max(len(r[i]) for r in rows) for i in range(len(REPORT_COLUMNS))]
    lines = ["# mAP over IoU 0.50:0.05:0.95 (101-point); AP-<part> averaged over the same thresholds"]
    for r in rows:
        lines.append("  ".join(c.rjust(w) for c, w in zip(r, widths)))
    return "\n".join(lines) + "\n"
