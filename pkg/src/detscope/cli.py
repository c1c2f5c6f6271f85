"""Command-line interface.

Exit codes: 0 success, 1 validation/data error, 2 usage error (argparse
default).  All commands are deterministic: the same inputs and flags
produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import report as report_mod
from .config import DEFAULT_IOU_THRESHOLDS, EvalConfig
from .data import (
    DetscopeError,
    ParseError,
    ValidationError,
    load_classifier_outputs,
    load_dataset,
    load_detections,
)
from .diagnose import DiagnoseConfig, diagnose
from .evaluate import evaluate
from .geom import BBox, iou, sample_boxes_min_iou
from .probes import (
    ProbeSpec,
    build_probe_dataset,
    export_context_crops,
    generate_incongruent_set,
    load_image,
    write_crop_records,
    write_probe_output,
    ProbeOutput,
)
from .upperbound import (
    AggregationMode,
    correlate_accuracy_uap,
    uap_strategy1,
    uap_strategy2,
)


def _parse_box(text: str) -> BBox:
    parts = text.split(",")
    if len(parts) != 4:
        raise ValidationError(f"box must be x,y,w,h; got {text!r}")
    try:
        x, y, w, h = (float(p) for p in parts)
    except ValueError as exc:
        raise ValidationError(f"box must be numeric x,y,w,h; got {text!r}") from exc
    return BBox(x, y, w, h)


def _eval_config(args) -> EvalConfig:
    kwargs = {}
    if getattr(args, "iou_thresholds", None):
        kwargs["iou_thresholds"] = tuple(
            float(t) for t in args.iou_thresholds.split(",")
        )
    if getattr(args, "max_dets", None) is not None:
        kwargs["max_dets_per_image"] = None if args.max_dets < 0 else args.max_dets
    if getattr(args, "interpolation", None):
        kwargs["interpolation"] = args.interpolation
    return EvalConfig(**kwargs)


def _load_images_for(ds, images_dir: Path) -> dict[int, np.ndarray]:
    out = {}
    for im in ds.images:
        if not im.file_name:
            raise ValidationError(f"image {im.id} has no file_name")
        out[im.id] = load_image(images_dir / im.file_name)
    return out


def _cmd_eval(args) -> int:
    cfg = _eval_config(args)
    ds = load_dataset(args.ann, cfg, drop_crowd=args.drop_crowd)
    dets = load_detections(args.det, ds)
    rep = evaluate(
        ds, dets, cfg, threads=args.threads, collect_curves=bool(args.pr_out)
    )
    report_mod.write_eval_json(rep, args.out)
    if args.csv:
        report_mod.write_eval_csv(rep, args.csv)
    if args.pr_out:
        report_mod.write_pr_curves(rep, args.pr_out)
    if rep.map is not None:
        print(f"mAP {rep.map:.6g}")
    else:
        print("mAP undefined (no targets)")
    return 0


def _cmd_uap(args) -> int:
    cfg = _eval_config(args)
    ds = load_dataset(args.ann, cfg, drop_crowd=args.drop_crowd)
    outputs = load_classifier_outputs(args.cls, ds)
    if args.strategy == 1:
        rep = uap_strategy1(
            ds, outputs, cfg, constant_confidence=args.constant_confidence
        )
    else:
        mode = (
            AggregationMode.MOST_FREQUENT_LABEL
            if args.mode == "most_frequent"
            else AggregationMode.MOST_CONFIDENT_BOX
        )
        rep = uap_strategy2(
            ds, outputs, mode, cfg, include_target=not args.neighbors_only
        )
    report_mod.write_eval_json(rep, args.out)
    if args.csv:
        report_mod.write_eval_csv(rep, args.csv)
    print(f"upper-bound mAP {rep.map:.6g}" if rep.map is not None else "mAP undefined")
    return 0


def _cmd_diagnose(args) -> int:
    cfg = _eval_config(args)
    ds = load_dataset(args.ann, cfg, drop_crowd=args.drop_crowd)
    dets = load_detections(args.det, ds)
    dcfg = DiagnoseConfig(t_bg=args.t_bg, t_loc=args.t_loc)
    rep = diagnose(ds, dets, cfg, dcfg)
    report_mod.write_diagnosis_json(rep, args.out)
    if args.csv:
        report_mod.write_diagnosis_csv(rep, args.csv)
    cells = " -> ".join(
        "n/a" if v is None else format(v, ".6g") for v in rep.sequence()
    )
    print(f"mAP trajectory: {cells}")
    return 0


def _cmd_sample_boxes(args) -> int:
    target = _parse_box(args.target)
    boxes = sample_boxes_min_iou(target, args.gamma, n=args.n, seed=args.seed)
    text = report_mod.format_boxes(boxes)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.verify:
        worst = min((iou(target, b) for b in boxes), default=1.0)
        print(f"min IOU {worst:.6g} (requested >= {args.gamma:g})")
    return 0


def _cmd_probes(args) -> int:
    ds = load_dataset(args.ann, drop_crowd=args.drop_crowd)
    images = _load_images_for(ds, Path(args.images))
    if args.variant == "incongruent":
        bg_dir = Path(args.backgrounds)
        bg_files = sorted(
            p for p in bg_dir.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg")
        )
        if not bg_files:
            raise ValidationError(f"no background images found in {bg_dir}")
        backgrounds = [(load_image(p), p.name) for p in bg_files]
        objects = []
        from .probes import _pixel_region  # crop helper

        for ann in sorted(ds.annotations, key=lambda a: a.id):
            im = images[ann.image_id]
            x0, y0, x1, y1 = _pixel_region(ann.bbox, im.shape[1], im.shape[0])
            objects.append((im[y0:y1, x0:x1].copy(), ann.category_id, ann.id))
        probe_images = generate_incongruent_set(
            objects, backgrounds, placement=args.placement, seed=args.seed
        )
        out = _materialize_probe_output(ds, probe_images)
    else:
        spec = ProbeSpec(
            variant=args.variant,
            min_dim=args.min_dim,
            ksize=args.ksize,
            sigma=args.sigma,
            seed=args.seed,
        )
        out = build_probe_dataset(ds, images, spec)
    write_probe_output(out, args.out)
    print(f"wrote {len(out.images)} images to {args.out}")
    return 0


def _materialize_probe_output(ds, probe_images) -> ProbeOutput:
    from .data import Dataset, ImageInfo
    from dataclasses import replace

    new_images = []
    new_anns = []
    manifest = []
    for i, probe in enumerate(probe_images, start=1):
        file_name = f"{i:06d}_{probe.tag}.png"
        info = ImageInfo(
            id=i,
            width=probe.pixels.shape[1],
            height=probe.pixels.shape[0],
            file_name=file_name,
        )
        new_images.append((info, probe.pixels))
        ann_ids = []
        for ann in probe.annotations:
            new_anns.append(replace(ann, id=len(new_anns) + 1, image_id=i))
            ann_ids.append(len(new_anns))
        manifest.append(
            {
                "image_id": i,
                "file_name": file_name,
                "source_image_id": probe.source_image_id,
                "source_annotation_ids": list(probe.source_annotation_ids),
                "annotation_ids": ann_ids,
                "variant": "incongruent",
            }
        )
    dataset = Dataset(
        tuple(info for info, _ in new_images), ds.categories, tuple(new_anns)
    )
    return ProbeOutput(dataset=dataset, images=new_images, manifest=manifest)


def _cmd_export_crops(args) -> int:
    ds = load_dataset(args.ann, drop_crowd=args.drop_crowd)
    images = _load_images_for(ds, Path(args.images))
    records = export_context_crops(
        ds, images, scale=args.scale, mode=args.mode, fill=args.fill
    )
    manifest = write_crop_records(records, args.out)
    n_ok = sum(1 for m in manifest if m["status"] == "ok")
    print(f"wrote {n_ok} crops ({len(manifest) - n_ok} skipped) to {args.out}")
    return 0


def _cmd_correlate(args) -> int:
    points = _load_points(args.points)
    corr = correlate_accuracy_uap(points)
    if args.out:
        report_mod.write_correlation_json(corr, args.out)
    print(
        f"slope {corr.slope:.6g} intercept {corr.intercept:.6g} "
        f"r2 {corr.r2:.6g} n {corr.n}"
    )
    return 0


def _load_points(path) -> list[tuple[float, float]]:
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    if p.suffix.lower() == ".json":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON ({exc})") from exc
        try:
            return [(float(x), float(y)) for x, y in raw]
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{path}: expected [[x, y], ...]") from exc
    points = []
    for i, line in enumerate(text.splitlines()):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if i == 0 and any(not _is_float(v) for v in parts[:2]):
            continue  # header row
        if len(parts) < 2 or not all(_is_float(v) for v in parts[:2]):
            raise ParseError(f"{path}:{i + 1}: expected 'x,y' got {line!r}")
        points.append((float(parts[0]), float(parts[1])))
    return points


def _is_float(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="detscope",
        description="Object-detection evaluation, upper bounds, diagnosis and probes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_eval_flags(p, with_interp=True):
        p.add_argument("--ann", required=True, help="COCO-style annotations JSON")
        p.add_argument("--drop-crowd", action="store_true", help="drop crowd regions")
        p.add_argument(
            "--iou-thresholds",
            help="comma-separated grid (default 0.5:0.05:0.95)",
        )
        p.add_argument(
            "--max-dets",
            type=int,
            default=None,
            help="per image+category cap; negative for unlimited (default 100)",
        )
        if with_interp:
            p.add_argument(
                "--interpolation",
                choices=("coco_101pt", "voc_all_points"),
                default=None,
            )

    p = sub.add_parser("eval", help="score detections against ground truth")
    add_eval_flags(p)
    p.add_argument("--det", required=True, help="COCO results JSON")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--csv", help="also write a CSV summary")
    p.add_argument("--pr-out", help="write PR curve points JSON")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("uap", help="empirical upper-bound AP from classifier outputs")
    add_eval_flags(p)
    p.add_argument("--cls", required=True, help="classifier outputs JSON")
    p.add_argument("--strategy", type=int, choices=(1, 2), default=1)
    p.add_argument(
        "--mode",
        choices=("most_confident", "most_frequent"),
        default="most_confident",
        help="strategy-2 aggregation",
    )
    p.add_argument(
        "--neighbors-only",
        action="store_true",
        help="strategy 2: aggregate neighbors without the target's own prediction",
    )
    p.add_argument("--constant-confidence", type=float, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.set_defaults(func=_cmd_uap)

    p = sub.add_parser("diagnose", help="sequential error fixing with mAP after each stage")
    add_eval_flags(p)
    p.add_argument("--det", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.add_argument("--t-bg", type=float, default=0.1)
    p.add_argument("--t-loc", type=float, default=0.5)
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("sample-boxes", help="draw same-size boxes at IOU >= gamma")
    p.add_argument("--target", required=True, help="x,y,w,h")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write boxes (one x,y,w,h per line)")
    p.add_argument("--verify", action="store_true", help="print the worst sampled IOU")
    p.set_defaults(func=_cmd_sample_boxes)

    p = sub.add_parser("probes", help="generate an invariance-probe dataset")
    p.add_argument("--ann", required=True)
    p.add_argument("--drop-crowd", action="store_true")
    p.add_argument("--images", required=True, help="directory with source images")
    p.add_argument(
        "--variant",
        required=True,
        choices=(
            "white_bg",
            "noise_bg",
            "objects_only",
            "crop",
            "crop_resize",
            "gaussian_blur",
            "vertical_flip",
            "incongruent",
        ),
    )
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--min-dim", type=int, default=300)
    p.add_argument("--ksize", type=int, default=11)
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backgrounds", help="background image directory (incongruent)")
    p.add_argument(
        "--placement", choices=("random", "center"), default="random"
    )
    p.set_defaults(func=_cmd_probes)

    p = sub.add_parser("export-crops", help="context-scaled classification crops")
    p.add_argument("--ann", required=True)
    p.add_argument("--drop-crowd", action="store_true")
    p.add_argument("--images", required=True)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--mode", choices=CONTEXT_MODE_CHOICES, required=True)
    p.add_argument("--fill", choices=("mean", "gray", "white"), default="mean")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_export_crops)

    p = sub.add_parser("correlate", help="line fit of accuracy vs upper-bound AP")
    p.add_argument(
        "--points", required=True, help="CSV (x,y per line) or JSON [[x, y], ...]"
    )
    p.add_argument("--out", help="write slope/intercept/r2 JSON")
    p.set_defaults(func=_cmd_correlate)
    return parser


CONTEXT_MODE_CHOICES = (
    "object_only",
    "object_with_context",
    "context_only",
    "whole_image",
)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "probes" and args.variant == "incongruent" and not args.backgrounds:
        parser.error("--backgrounds is required for --variant incongruent")
    try:
        return args.func(args)
    except (DetscopeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
