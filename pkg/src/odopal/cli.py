"""``odopal`` command line: convert, split, extract, correlate, eval."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path


from . import annot, colour, ingest, maskops, pipeline, segeval, stats
from .annot import AnnotationError, AnnotationSet, BodyPart

log = logging.getLogger("odopal")

IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".PNG", ".JPG", ".JPEG")
RASTER_EXTS = (".png", ".tif", ".tiff", ".lbl")
PALETTE_HEADER = ["record_id", "part", "rank", "r", "g", "b", "frequency"]
STATS_HEADER = ["record_id", "part", "pixel_count", "mean_r", "mean_g", "mean_b", "mean_h", "mean_s", "mean_v"]
STATS_8BIT = ["mean_h_8bit", "mean_s_8bit", "mean_v_8bit"]


@dataclass
class PipelineConfig:
    images: Path | None = None
    annotations: Path | None = None
    occurrences: Path | None = None
    output: Path | None = None
    k: int = colour.DEFAULT_K
    seed: int = 0
    tol: float = colour.DEFAULT_TOL
    max_iter: int = colour.DEFAULT_MAX_ITER
    threshold: int = maskops.DEFAULT_THRESHOLD
    exclude: frozenset[BodyPart] = field(default_factory=lambda: frozenset({BodyPart.WINGS}))
    filter: ingest.FilterSpec = field(default_factory=ingest.FilterSpec)
    hsv_8bit: bool = False
    panels: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not 0 <= self.threshold <= 255:
            raise ValueError(f"threshold must be in [0, 255], got {self.threshold}")


class CliError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers


def _load_toml(path: str) -> dict:
    try:
        import tomllib
    except ImportError:  # python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _parse_parts(value) -> frozenset[BodyPart]:
    if isinstance(value, (list, tuple)):
        items = value
    else:
        items = [v for v in str(value).split(",") if v.strip()]
    if len(items) == 1 and str(items[0]).strip().lower() == "none":
        return frozenset()
    return frozenset(BodyPart.from_name(str(v)) for v in items)


def _parse_ratios(value) -> tuple[float, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(float(v) for v in value)
    sep = ":" if ":" in value else ","
    return tuple(float(v) for v in value.split(sep) if v.strip())


def _parse_region(value) -> ingest.Region | None:
    if value is None:
        return None
    nums = value if isinstance(value, (list, tuple)) else value.split(",")
    if len(nums) != 4:
        raise CliError("--region expects min_lat,max_lat,min_lon,max_lon")
    return ingest.Region(*(float(v) for v in nums))


def _parse_column_map(value) -> dict[str, str] | None:
    if value is None:
        return None
    if isinstance(value, dict):
        return {str(k): str(v) for k, v in value.items()}
    out = {}
    for pair in value.split(","):
        if not pair.strip():
            continue
        name, _, role = pair.partition("=")
        out[name.strip()] = role.strip()
    return out


def _find_by_stem(directory: Path, stem: str, exts) -> Path | None:
    for ext in exts:
        p = directory / f"{stem}{ext}"
        if p.exists():
            return p
    return None


def _files(path: Path, exts) -> list[Path]:
    if path.is_file():
        return [path]
    return sorted(p for p in path.iterdir() if p.suffix in exts or p.suffix.lower() in exts)


def _image_dims(path: Path) -> tuple[int, int]:
    from PIL import Image

    with Image.open(path) as im:
        return im.size


def _parse_dims(value: str | None) -> tuple[int, int] | None:
    if not value:
        return None
    w, _, h = value.lower().partition("x")
    return int(w), int(h)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _emit(args, summary: dict) -> None:
    if getattr(args, "json", False):
        json.dump(summary, sys.stdout, sort_keys=True)
        sys.stdout.write("\n")


# --------------------------------------------------------------------------
# annotation loading shared by convert and extract


def _detect_format(path: Path) -> str:
    if path.is_file() and path.suffix.lower() == ".json":
        return "coco"
    if path.is_file() and path.suffix.lower() in RASTER_EXTS:
        return "raster"
    if path.is_dir() and any(path.glob("*.txt")):
        return "yolo"
    if path.is_dir() and any(p.suffix.lower() in RASTER_EXTS for p in path.iterdir()):
        return "raster"
    return "yolo"


def load_annotation_sets(path: Path, fmt: str, images: Path | None = None,
                         dims: tuple[int, int] | None = None):
    """Return ``(sets, failures)``; failures are ``(path, message)`` pairs."""
    sets, failures = [], []
    if fmt == "coco":
        try:
            sets = annot.parse_coco(path.read_text(encoding="utf-8"))
        except (OSError, AnnotationError) as exc:
            failures.append((str(path), str(exc)))
        return sets, failures
    if fmt == "yolo":
        for f in _files(path, (".txt",)):
            try:
                d = dims
                img = _find_by_stem(images, f.stem, IMAGE_EXTS) if images else None
                if img is not None:
                    d = _image_dims(img)
                if d is None:
                    raise AnnotationError("image dims unknown (pass --images or --dims)")
                anns = annot.parse_yolo_seg(f.read_text(encoding="utf-8"), d)
                sets.append(AnnotationSet(f.stem, d[0], d[1], anns,
                                          file_name=img.name if img is not None else f.stem))
            except (OSError, ValueError) as exc:
                failures.append((str(f), str(exc)))
        return sets, failures
    if fmt == "raster":
        for f in _files(path, RASTER_EXTS):
            try:
                aset = annot.raster_to_annotations(annot.read_label_raster(f), f.stem)
                aset.file_name = f.stem
                sets.append(aset)
            except (OSError, ValueError) as exc:
                failures.append((str(f), str(exc)))
        return sets, failures
    raise CliError(f"unknown annotation format {fmt!r}")


# --------------------------------------------------------------------------
# subcommands


def cmd_convert(args) -> int:
    src = Path(args.input)
    if not src.exists():
        raise CliError(f"cannot read input {src}")
    fmt = args.from_format or _detect_format(src)
    sets, failures = load_annotation_sets(src, fmt, Path(args.images) if args.images else None,
                                          _parse_dims(args.dims))
    out = Path(args.output)
    if args.to_format == "coco":
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(annot.write_coco(sets), encoding="utf-8")
    else:
        out.mkdir(parents=True, exist_ok=True)
        for s in sets:
            if args.to_format == "yolo":
                (out / f"{s.stem}.txt").write_text(annot.write_yolo_seg(s), encoding="utf-8")
            else:
                annot.write_label_raster(out / f"{s.stem}.png", annot.annotations_to_raster(s))
    n_ann = sum(len(s.annotations) for s in sets)
    log.info("converted %d image(s), %d annotation(s) from %s to %s", len(sets), n_ann, fmt, args.to_format)
    for s in sets:
        log.info("  %s: %d annotation(s)", s.stem, len(s.annotations))
    for path, msg in failures:
        log.error("failed: %s: %s", path, msg)
    _emit(args, {"converted": len(sets), "annotations": n_ann,
                 "failed": [{"path": p, "error": m} for p, m in failures]})
    return 1 if failures else 0


def cmd_split(args) -> int:
    if args.ids:
        ids = [ln.strip() for ln in Path(args.ids).read_text(encoding="utf-8").splitlines() if ln.strip()]
    elif args.images:
        ids = sorted(p.stem for p in Path(args.images).iterdir() if p.suffix in IMAGE_EXTS)
    else:
        raise CliError("split needs --ids or --images")
    ratios = _parse_ratios(args.ratios)
    parts = annot.split_dataset(ids, ratios, args.seed)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    names = ("train", "val", "test") if len(parts) == 3 else tuple(f"split{i}" for i in range(len(parts)))
    for name, items in zip(names, parts):
        (out / f"{name}.txt").write_text("".join(f"{i}\n" for i in items), encoding="utf-8")
    log.info("split %d item(s): %s", len(ids), ", ".join(f"{n}={len(p)}" for n, p in zip(names, parts)))
    _emit(args, {n: len(p) for n, p in zip(names, parts)})
    return 0


@dataclass
class _Item:
    record_id: str
    image: Path
    aset: AnnotationSet


def _extract_one(item: _Item, cfg: PipelineConfig):
    image = maskops.load_rgb(item.image)
    results = pipeline.extract_parts(image, item.aset, item.record_id, k=cfg.k, seed=cfg.seed, tol=cfg.tol,
                                     max_iter=cfg.max_iter, threshold=cfg.threshold, exclude=cfg.exclude)
    expected = {a.part for a in item.aset.annotations} - cfg.exclude
    for part in sorted(expected - {r.part for r in results}):
        log.warning("%s: %s mask is empty after resizing, skipped", item.record_id, part.label)
    panel = None
    if cfg.panels:
        panel = colour.render_palette_panel(image, [(r.part, r.mask, r.palette) for r in results])
    return results, panel


def _extract_items(args, cfg: PipelineConfig):
    ann_path = Path(args.annotations)
    fmt = args.format or _detect_format(ann_path)
    images = Path(args.images)
    sets, failures = load_annotation_sets(ann_path, fmt, images)
    manifest = {}
    if args.manifest:
        with open(args.manifest, newline="") as fh:
            for row in csv.DictReader(fh):
                manifest[Path(row["annotation"]).stem] = images / row["image"]
    items = []
    for s in sets:
        img = manifest.get(s.stem) or _find_by_stem(images, s.stem, IMAGE_EXTS)
        if img is None or not img.exists():
            failures.append((s.stem, "no image with a matching stem"))
            continue
        items.append(_Item(Path(img).stem, Path(img), s))
    return items, failures


def cmd_extract(args) -> int:
    cfg = args.cfg
    items, failures = _extract_items(args, cfg)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.panels:
        (out / "panels").mkdir(exist_ok=True)

    todo = []
    for it in items:
        if not it.aset.annotations:
            log.info("%s: no annotations, skipped", it.record_id)
        else:
            todo.append(it)

    def run(it):
        try:
            return it, _extract_one(it, cfg), None
        except Exception as exc:  # per-item failures are reported, not fatal
            return it, None, exc

    with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
        done = list(pool.map(run, todo))

    palette_rows, stats_rows = [], []
    for it, res, exc in sorted(done, key=lambda t: t[0].record_id):
        if exc is not None:
            failures.append((it.record_id, str(exc)))
            continue
        results, panel = res
        for pr in results:
            part, palette, st = pr.part, pr.palette, pr.stats
            for rank, (rgb, freq) in enumerate(palette.entries, start=1):
                palette_rows.append([it.record_id, part.label, rank, *rgb, repr(freq)])
            row = [it.record_id, part.label, st.pixel_count, *(repr(c) for c in st.mean_rgb),
                   repr(st.mean_hsv.h), repr(st.mean_hsv.s), repr(st.mean_hsv.v)]
            if cfg.hsv_8bit:
                row += [repr(c) for c in st.mean_hsv.to_8bit()]
            stats_rows.append(row)
        if panel is not None:
            maskops.save_png(out / "panels" / f"{it.record_id}.png", panel)

    _write_csv(out / "palettes.csv", PALETTE_HEADER, palette_rows)
    _write_csv(out / "stats.csv", STATS_HEADER + (STATS_8BIT if cfg.hsv_8bit else []), stats_rows)
    for where, msg in failures:
        log.warning("failed: %s: %s", where, msg)
    processed = len(todo) - sum(1 for _, _, e in done if e is not None)
    log.info("extracted %d part row(s) from %d image(s)", len(stats_rows), processed)
    _emit(args, {"images": processed, "part_rows": len(stats_rows),
                 "skipped": len(items) - len(todo),
                 "failed": [{"item": w, "error": m} for w, m in failures]})
    return 1 if failures and processed == 0 else 0


def read_stats_csv(path: Path) -> list[tuple[str, colour.PartColourStats]]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(STATS_HEADER) - set(reader.fieldnames or [])
        if missing:
            raise CliError(f"{path}: missing column(s) {sorted(missing)}")
        for row in reader:
            out.append((row["record_id"], colour.PartColourStats(
                BodyPart.from_name(row["part"]),
                int(row["pixel_count"]),
                (float(row["mean_r"]), float(row["mean_g"]), float(row["mean_b"])),
                colour.HsvTriple(float(row["mean_h"]), float(row["mean_s"]), float(row["mean_v"])),
            )))
    return out


def cmd_correlate(args) -> int:
    cfg = args.cfg
    stats_rows = read_stats_csv(Path(args.stats))
    with open(args.occurrences, encoding="utf-8", newline="") as fh:
        records = ingest.parse_occurrences(fh, _parse_column_map(args.column_map))
    kept = ingest.filter_records(records, cfg.filter)
    joined = ingest.join_metadata(stats_rows, kept)
    log.info("join: %d matched, %d stats row(s) unmatched, %d record(s) unmatched (%d of %d records kept by filter)",
             joined.matched, joined.unmatched_stats, joined.unmatched_records, len(kept), len(records))
    diag = {"matched": joined.matched, "unmatched_stats": joined.unmatched_stats,
            "unmatched_records": joined.unmatched_records}
    if not joined.rows:
        log.error("empty join: no stats row matched an occurrence record")
        _emit(args, {**diag, "groups": []})
        return 1
    results = []
    for variable in stats.VARIABLES:
        results += stats.group_and_correlate(joined.rows, ("sex", "part"), variable)
        results += stats.group_and_correlate(joined.rows, ("part",), variable)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "correlations.csv", stats.CORRELATION_HEADER, stats.correlation_rows(results))
    (out / "summary.txt").write_text(stats.summarize(results), encoding="utf-8")
    with open(out / "joined.csv", "w", newline="") as fh:
        ingest.write_join_csv(joined.rows, fh)
    sys.stderr.write(stats.summarize(results))
    _emit(args, {**diag, "groups": [
        {"sex": g.sex, "part": g.part, "variable": g.variable, "n": g.n, "status": g.note or "ok",
         **({} if g.result is None else {"pearson_r": g.result.pearson_r, "pearson_p": g.result.pearson_p,
                                         "spearman_rho": g.result.spearman_rho,
                                         "spearman_p": g.result.spearman_p})}
        for g in results]})
    return 0


def cmd_eval(args) -> int:
    gt_sets = annot.parse_coco(Path(args.gt).read_text(encoding="utf-8"))
    pred_sets = segeval.load_predictions(Path(args.pred).read_text(encoding="utf-8"), gt_sets)
    gts = segeval.instances_from_sets(gt_sets)
    dets = segeval.instances_from_sets(pred_sets)
    report = segeval.evaluate(dets, gts)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval.csv").write_text(segeval.report_csv(report), encoding="utf-8")
    text = segeval.report_text(report)
    (out / "eval.txt").write_text(text, encoding="utf-8")
    sys.stderr.write(text)
    _emit(args, {mode: {"map": r.map, "map50": r.map50, "map75": r.map75,
                        "ap_per_class": {p.label: v for p, v in r.ap_per_class.items()}}
                 for mode, r in report.modes.items()})
    return 0


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file of flag defaults")
    common.add_argument("--seed", type=int, help="random seed (fallback: $ODOPAL_SEED, then 0)")
    common.add_argument("--json", action="store_true", help="print a JSON summary on stdout")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="odopal", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("convert", parents=[common], help="convert between annotation formats")
    c.add_argument("--input", required=True)
    c.add_argument("--output", required=True)
    c.add_argument("--from", dest="from_format", choices=["yolo", "coco", "raster"])
    c.add_argument("--to", dest="to_format", choices=["yolo", "coco", "raster"], required=True)
    c.add_argument("--images", help="image directory, used for YOLO image dims")
    c.add_argument("--dims", help="WxH for YOLO labels when no image is available")
    c.set_defaults(func=cmd_convert)

    s = sub.add_parser("split", parents=[common], help="seeded train/val/test split")
    s.add_argument("--ids", help="text file, one image id per line")
    s.add_argument("--images", help="image directory (ids are file stems)")
    s.add_argument("--ratios", default="5,1,1")
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_split)

    e = sub.add_parser("extract", parents=[common], help="palettes and mean HSV per body part")
    e.add_argument("--images", required=True)
    e.add_argument("--annotations", required=True)
    e.add_argument("--format", choices=["yolo", "coco", "raster"])
    e.add_argument("--manifest", help="CSV with image,annotation columns overriding stem pairing")
    e.add_argument("--output", required=True)
    e.add_argument("--k", type=int, default=colour.DEFAULT_K)
    e.add_argument("--tol", type=float, default=colour.DEFAULT_TOL)
    e.add_argument("--max-iter", type=int, default=colour.DEFAULT_MAX_ITER)
    e.add_argument("--threshold", type=int, default=maskops.DEFAULT_THRESHOLD)
    e.add_argument("--exclude", default="wings", help="comma-separated parts to skip, or 'none'")
    e.add_argument("--panels", action="store_true", help="write palette panel PNGs")
    e.add_argument("--hsv-8bit", action="store_true", help="add HSV columns in the 8-bit (h/2, s*255, v*255) scale")
    e.add_argument("--workers", type=int, default=1)
    e.set_defaults(func=cmd_extract)

    r = sub.add_parser("correlate", parents=[common], help="join stats with occurrences and correlate")
    r.add_argument("--stats", required=True)
    r.add_argument("--occurrences", required=True)
    r.add_argument("--column-map", help="name=role pairs, comma separated (default: GBIF columns)")
    r.add_argument("--life-stage")
    r.add_argument("--species")
    r.add_argument("--region", help="min_lat,max_lat,min_lon,max_lon")
    r.add_argument("--output", required=True)
    r.set_defaults(func=cmd_correlate)

    v = sub.add_parser("eval", parents=[common], help="box and mask mAP/AP")
    v.add_argument("--gt", required=True)
    v.add_argument("--pred", required=True)
    v.add_argument("--output", required=True)
    v.set_defaults(func=cmd_eval)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config:
        conf = _load_toml(args.config)
        flat = {k.replace("-", "_"): v for k, v in conf.items() if not isinstance(v, dict)}
        flat.update({k.replace("-", "_"): v for k, v in conf.get(args.command, {}).items()})
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(flat) - known
        if unknown:
            raise CliError(f"{args.config}: unknown key(s) {sorted(unknown)}")
        sub.set_defaults(**flat)
        args = parser.parse_args(argv)
    if args.seed is None:
        env = os.environ.get("ODOPAL_SEED")
        args.seed = int(env) if env else 0
    return args


def _config_from_args(args) -> PipelineConfig:
    cfg = PipelineConfig(seed=args.seed)
    for name in ("k", "tol", "max_iter", "threshold", "workers"):
        if hasattr(args, name):
            setattr(cfg, name, getattr(args, name))
    if hasattr(args, "exclude"):
        cfg.exclude = _parse_parts(args.exclude)
    cfg.hsv_8bit = bool(getattr(args, "hsv_8bit", False))
    cfg.panels = bool(getattr(args, "panels", False))
    if args.command == "correlate":
        cfg.filter = ingest.FilterSpec(args.life_stage, args.species, _parse_region(args.region))
    cfg.__post_init__()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                            format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
        args.cfg = _config_from_args(args)
        return args.func(args)
    except (CliError, AnnotationError, ingest.IngestError, ValueError, OSError) as exc:
        sys.stderr.write(f"odopal: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
