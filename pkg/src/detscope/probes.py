"""Invariance-probe dataset generation.

Each probe rewrites dataset images (and, where needed, their boxes)
into a controlled variant: objects on white/noise backgrounds, bare
crops, resized crops with a fixed short side, blurred or vertically
flipped frames, objects pasted onto incongruent backgrounds, and
context-scaled classification crops.  Outputs are plain images plus a
manifest and a derived annotation file, so the generated sets can be
scored with the evaluator directly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import cv2
import numpy as np

from .data import (
    Dataset,
    GroundTruth,
    ImageInfo,
    ParseError,
    ValidationError,
    save_dataset,
    size_bucket,
)
from .geom import BBox, scale_box

PROBE_VARIANTS = (
    "white_bg",
    "noise_bg",
    "objects_only",
    "crop",
    "crop_resize",
    "gaussian_blur",
    "vertical_flip",
)

CONTEXT_MODES = ("object_only", "object_with_context", "context_only", "whole_image")

_WHITE = 255


@dataclass(frozen=True)
class ProbeSpec:
    variant: str
    min_dim: int = 300
    ksize: int = 11
    sigma: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.variant not in PROBE_VARIANTS:
            raise ValidationError(
                f"unknown probe variant {self.variant!r}; choose from {PROBE_VARIANTS}"
            )
        if self.min_dim < 1:
            raise ValidationError(f"min_dim must be >= 1, got {self.min_dim}")
        if self.ksize < 1 or self.ksize % 2 == 0:
            raise ValidationError(f"ksize must be odd and positive, got {self.ksize}")
        if self.sigma <= 0:
            raise ValidationError(f"sigma must be positive, got {self.sigma}")


@dataclass
class ProbeImage:
    pixels: np.ndarray
    annotations: tuple[GroundTruth, ...]
    source_image_id: int
    source_annotation_ids: tuple[int, ...]
    tag: str


def gaussian_kernel1d(ksize: int = 11, sigma: float = 2.0) -> np.ndarray:
    """Symmetric separable Gaussian taps, normalized to sum 1."""
    if ksize < 1 or ksize % 2 == 0:
        raise ValidationError(f"ksize must be odd and positive, got {ksize}")
    if sigma <= 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    half = (ksize - 1) / 2.0
    xs = np.arange(ksize, dtype=np.float64) - half
    k = np.exp(-(xs**2) / (2.0 * sigma**2))
    return k / k.sum()


def gaussian_kernel2d(ksize: int = 11, sigma: float = 2.0) -> np.ndarray:
    k = gaussian_kernel1d(ksize, sigma)
    return np.outer(k, k)


def _check_image(image: np.ndarray) -> tuple[int, int]:
    if not isinstance(image, np.ndarray) or image.ndim not in (2, 3):
        raise ValidationError("image must be an HxW or HxWxC numpy array")
    return image.shape[0], image.shape[1]


def _check_bounds(ann: GroundTruth, width: int, height: int) -> None:
    b = ann.bbox
    if b.x < 0 or b.y < 0 or b.x2 > width or b.y2 > height:
        raise ValidationError(
            f"annotation {ann.id}: box {b.as_xywh()} leaves the {width}x{height} image"
        )


def _pixel_region(box: BBox, width: int, height: int) -> tuple[int, int, int, int]:
    x0 = max(0, int(np.floor(box.x)))
    y0 = max(0, int(np.floor(box.y)))
    x1 = min(width, int(np.ceil(box.x2)))
    y1 = min(height, int(np.ceil(box.y2)))
    return x0, y0, x1, y1


def _remap_full(ann: GroundTruth, w: float, h: float) -> GroundTruth:
    bbox = BBox(0.0, 0.0, float(w), float(h))
    return replace(
        ann, bbox=bbox, area=bbox.area, size_class=size_bucket(bbox.area)
    )


def generate_probe(
    image: np.ndarray, annots: Sequence[GroundTruth], spec: ProbeSpec
) -> list[ProbeImage]:
    """Apply one probe variant to one image.

    Per-annotation variants (white_bg, noise_bg, crop, crop_resize)
    yield one output per annotation; the rest yield one per image.
    """
    height, width = _check_image(image)
    for ann in annots:
        _check_bounds(ann, width, height)
    image_id = annots[0].image_id if annots else 0
    out: list[ProbeImage] = []

    if spec.variant in ("white_bg", "noise_bg"):
        for ann in annots:
            if spec.variant == "white_bg":
                canvas = np.full_like(image, _WHITE)
            else:
                rng = np.random.default_rng([spec.seed, ann.image_id, ann.id])
                canvas = rng.integers(0, 256, size=image.shape, dtype=np.uint8)
            x0, y0, x1, y1 = _pixel_region(ann.bbox, width, height)
            canvas[y0:y1, x0:x1] = image[y0:y1, x0:x1]
            out.append(
                ProbeImage(
                    pixels=canvas,
                    annotations=(ann,),
                    source_image_id=ann.image_id,
                    source_annotation_ids=(ann.id,),
                    tag=f"{spec.variant}_a{ann.id}",
                )
            )
    elif spec.variant == "objects_only":
        canvas = np.full_like(image, _WHITE)
        for ann in annots:
            x0, y0, x1, y1 = _pixel_region(ann.bbox, width, height)
            canvas[y0:y1, x0:x1] = image[y0:y1, x0:x1]
        out.append(
            ProbeImage(
                pixels=canvas,
                annotations=tuple(annots),
                source_image_id=image_id,
                source_annotation_ids=tuple(a.id for a in annots),
                tag="objects_only",
            )
        )
    elif spec.variant in ("crop", "crop_resize"):
        for ann in annots:
            x0, y0, x1, y1 = _pixel_region(ann.bbox, width, height)
            if x1 - x0 < 1 or y1 - y0 < 1:
                raise ValidationError(
                    f"annotation {ann.id}: box too small to crop a pixel"
                )
            patch = image[y0:y1, x0:x1].copy()
            if spec.variant == "crop_resize":
                ph, pw = patch.shape[0], patch.shape[1]
                if pw <= ph:
                    ow = spec.min_dim
                    oh = int(round(ph * spec.min_dim / pw))
                else:
                    oh = spec.min_dim
                    ow = int(round(pw * spec.min_dim / ph))
                patch = cv2.resize(patch, (ow, oh), interpolation=cv2.INTER_LINEAR)
            out.append(
                ProbeImage(
                    pixels=patch,
                    annotations=(_remap_full(ann, patch.shape[1], patch.shape[0]),),
                    source_image_id=ann.image_id,
                    source_annotation_ids=(ann.id,),
                    tag=f"{spec.variant}_a{ann.id}",
                )
            )
    elif spec.variant == "gaussian_blur":
        k = gaussian_kernel1d(spec.ksize, spec.sigma)
        blurred = cv2.sepFilter2D(image, -1, k, k)
        out.append(
            ProbeImage(
                pixels=blurred,
                annotations=tuple(annots),
                source_image_id=image_id,
                source_annotation_ids=tuple(a.id for a in annots),
                tag="gaussian_blur",
            )
        )
    elif spec.variant == "vertical_flip":
        flipped = np.ascontiguousarray(image[::-1])
        remapped = tuple(flip_box_vertical(a, height) for a in annots)
        out.append(
            ProbeImage(
                pixels=flipped,
                annotations=remapped,
                source_image_id=image_id,
                source_annotation_ids=tuple(a.id for a in annots),
                tag="vertical_flip",
            )
        )
    else:  # pragma: no cover - ProbeSpec already validated
        raise ValidationError(f"unknown probe variant {spec.variant!r}")
    return out


def flip_box_vertical(ann: GroundTruth, height: float) -> GroundTruth:
    b = ann.bbox
    return replace(ann, bbox=BBox(b.x, height - b.y - b.h, b.w, b.h))


# --- incongruent-context pasting -------------------------------------------


def paste_incongruent(
    obj: np.ndarray,
    category_id: int,
    background: np.ndarray,
    placement: str | tuple[float, float] = "random",
    *,
    rng: np.random.Generator | None = None,
    rel_center: tuple[float, float] | None = None,
    annotation_id: int = 0,
    image_id: int = 0,
) -> tuple[np.ndarray, GroundTruth]:
    """Paste an object crop fully inside a background.

    placement: "random" (uniform over admissible top-left corners,
    seeded via rng), "center", "relative" (preserve the source frame's
    relative center, passed as rel_center fractions), or an explicit
    (x, y) top-left.  The object must fit inside the background.
    """
    oh, ow = _check_image(obj)
    bh, bw = _check_image(background)
    if ow > bw or oh > bh:
        raise ValidationError(
            f"object {ow}x{oh} does not fit background {bw}x{bh}"
        )
    if isinstance(placement, tuple):
        x0, y0 = int(round(placement[0])), int(round(placement[1]))
    elif placement == "center":
        x0, y0 = (bw - ow) // 2, (bh - oh) // 2
    elif placement == "relative":
        if rel_center is None:
            raise ValidationError("relative placement requires rel_center")
        x0 = int(round(rel_center[0] * bw - ow / 2.0))
        y0 = int(round(rel_center[1] * bh - oh / 2.0))
        x0 = min(max(x0, 0), bw - ow)
        y0 = min(max(y0, 0), bh - oh)
    elif placement == "random":
        rng = rng if rng is not None else np.random.default_rng(0)
        x0 = int(rng.integers(0, bw - ow + 1))
        y0 = int(rng.integers(0, bh - oh + 1))
    else:
        raise ValidationError(f"unknown placement {placement!r}")
    if x0 < 0 or y0 < 0 or x0 + ow > bw or y0 + oh > bh:
        raise ValidationError(
            f"placement ({x0}, {y0}) puts the {ow}x{oh} object outside {bw}x{bh}"
        )
    composite = background.copy()
    composite[y0 : y0 + oh, x0 : x0 + ow] = obj
    bbox = BBox(float(x0), float(y0), float(ow), float(oh))
    ann = GroundTruth(
        id=annotation_id,
        image_id=image_id,
        category_id=category_id,
        bbox=bbox,
        area=bbox.area,
        size_class=size_bucket(bbox.area),
    )
    return composite, ann


def generate_incongruent_set(
    objects: Sequence[tuple[np.ndarray, int, int]],
    backgrounds: Sequence[tuple[np.ndarray, str]],
    placement: str = "random",
    seed: int = 0,
) -> list[ProbeImage]:
    """Every (object, background) pair -> one composite with one box.

    objects are (pixels, category_id, source_annotation_id) triples;
    backgrounds are (pixels, name) pairs.  9 objects on 100 backgrounds
    yield 900 outputs.
    """
    out = []
    for oi, (obj, category_id, src_ann) in enumerate(objects):
        for bi, (bg, bg_name) in enumerate(backgrounds):
            rng = np.random.default_rng([seed, oi, bi])
            composite, ann = paste_incongruent(
                obj,
                category_id,
                bg,
                placement,
                rng=rng,
                annotation_id=src_ann,
                image_id=0,
            )
            out.append(
                ProbeImage(
                    pixels=composite,
                    annotations=(ann,),
                    source_image_id=0,
                    source_annotation_ids=(src_ann,),
                    tag=f"paste_a{src_ann}_b{bi}_{Path(bg_name).stem}",
                )
            )
    return out


# --- context-scaled classification crops ------------------------------------


@dataclass
class CropRecord:
    annotation_id: int
    image_id: int
    category_id: int
    pixels: np.ndarray | None
    status: str  # "ok" or "skipped"
    reason: str = ""


def dataset_mean_pixel(images: Sequence[np.ndarray]) -> np.ndarray:
    """Per-channel mean over every pixel of every image."""
    if not images:
        raise ValidationError("cannot take the mean pixel of zero images")
    total = np.zeros(3 if images[0].ndim == 3 else 1, dtype=np.float64)
    count = 0
    for im in images:
        flat = im.reshape(-1, im.shape[2]) if im.ndim == 3 else im.reshape(-1, 1)
        total += flat.sum(axis=0, dtype=np.float64)
        count += flat.shape[0]
    return total / count


def _fill_value(fill: str, images: Sequence[np.ndarray]) -> np.ndarray:
    if fill == "mean":
        return np.round(dataset_mean_pixel(images)).astype(np.uint8)
    if fill == "gray":
        return np.array([128], dtype=np.uint8)
    if fill == "white":
        return np.array([255], dtype=np.uint8)
    raise ValidationError(f"unknown fill {fill!r}; choose mean, gray or white")


def export_context_crops(
    ds: Dataset,
    images: Mapping[int, np.ndarray],
    scale: float,
    mode: str,
    *,
    fill: str = "mean",
) -> list[CropRecord]:
    """Cut one classification crop per annotation.

    object_only / object_with_context crop the box scaled by `scale`
    (clipped to the frame); context_only additionally paints the
    unscaled box with a fill color (dataset mean by default) so only
    surroundings remain; whole_image exports the entire frame.  Crops
    that degenerate after clipping are skipped with a reason, not
    errors.  Records come back sorted by (image_id, annotation_id).
    """
    if mode not in CONTEXT_MODES:
        raise ValidationError(f"unknown mode {mode!r}; choose from {CONTEXT_MODES}")
    if mode != "whole_image" and not (0.2 <= scale <= 2.0):
        raise ValidationError(f"scale {scale} outside the supported range [0.2, 2.0]")
    fill_px = None
    if mode == "context_only":
        fill_px = _fill_value(fill, [images[i.id] for i in ds.images if i.id in images])
    records = []
    for ann in sorted(ds.annotations, key=lambda a: (a.image_id, a.id)):
        if ann.image_id not in images:
            records.append(
                CropRecord(ann.id, ann.image_id, ann.category_id, None, "skipped", "missing image")
            )
            continue
        image = images[ann.image_id]
        height, width = _check_image(image)
        _check_bounds(ann, width, height)
        if mode == "whole_image":
            records.append(
                CropRecord(ann.id, ann.image_id, ann.category_id, image.copy(), "ok")
            )
            continue
        try:
            box = scale_box(ann.bbox, scale, (width, height))
        except ValueError as exc:
            records.append(
                CropRecord(ann.id, ann.image_id, ann.category_id, None, "skipped", str(exc))
            )
            continue
        x0, y0, x1, y1 = _pixel_region(box, width, height)
        if x1 - x0 < 1 or y1 - y0 < 1:
            records.append(
                CropRecord(
                    ann.id, ann.image_id, ann.category_id, None, "skipped", "degenerate crop"
                )
            )
            continue
        patch = image[y0:y1, x0:x1].copy()
        if mode == "context_only":
            ox0, oy0, ox1, oy1 = _pixel_region(ann.bbox, width, height)
            # object region in crop coordinates, clipped to the patch
            fx0 = max(ox0 - x0, 0)
            fy0 = max(oy0 - y0, 0)
            fx1 = min(ox1 - x0, x1 - x0)
            fy1 = min(oy1 - y0, y1 - y0)
            if fx1 > fx0 and fy1 > fy0:
                patch[fy0:fy1, fx0:fx1] = fill_px
        records.append(
            CropRecord(ann.id, ann.image_id, ann.category_id, patch, "ok")
        )
    return records


# --- dataset-level drivers and file output ----------------------------------


@dataclass
class ProbeOutput:
    dataset: Dataset
    images: list[tuple[ImageInfo, np.ndarray]]
    manifest: list[dict]


def build_probe_dataset(
    ds: Dataset,
    images: Mapping[int, np.ndarray],
    spec: ProbeSpec,
) -> ProbeOutput:
    """Run a probe over a dataset held in memory.

    Output image/annotation ids are renumbered sequentially in manifest
    order (sorted by source image id, then annotation id); categories
    carry over unchanged.
    """
    new_images: list[tuple[ImageInfo, np.ndarray]] = []
    new_anns: list[GroundTruth] = []
    manifest: list[dict] = []
    next_image_id = 1
    next_ann_id = 1
    for im in sorted(ds.images, key=lambda i: i.id):
        if im.id not in images:
            raise ValidationError(f"image {im.id}: pixels not provided")
        annots = sorted(
            (a for a in ds.annotations if a.image_id == im.id), key=lambda a: a.id
        )
        for probe in generate_probe(images[im.id], annots, spec):
            file_name = f"{next_image_id:06d}_{probe.tag}.png"
            info = ImageInfo(
                id=next_image_id,
                width=probe.pixels.shape[1],
                height=probe.pixels.shape[0],
                file_name=file_name,
            )
            new_images.append((info, probe.pixels))
            ann_ids = []
            for ann in probe.annotations:
                new_anns.append(
                    replace(ann, id=next_ann_id, image_id=next_image_id)
                )
                ann_ids.append(next_ann_id)
                next_ann_id += 1
            manifest.append(
                {
                    "image_id": next_image_id,
                    "file_name": file_name,
                    "source_image_id": im.id,
                    "source_annotation_ids": list(probe.source_annotation_ids),
                    "annotation_ids": ann_ids,
                    "variant": spec.variant,
                }
            )
            next_image_id += 1
    dataset = Dataset(
        tuple(info for info, _ in new_images), ds.categories, tuple(new_anns)
    )
    return ProbeOutput(dataset=dataset, images=new_images, manifest=manifest)


def write_probe_output(out: ProbeOutput, out_dir) -> None:
    """PNG per image + manifest.json + annotations.json under out_dir."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    for info, pixels in out.images:
        if not cv2.imwrite(str(root / info.file_name), pixels):
            raise OSError(f"failed to write {root / info.file_name}")
    (root / "manifest.json").write_text(
        json.dumps(out.manifest, indent=2, sort_keys=True), encoding="utf-8"
    )
    save_dataset(out.dataset, root / "annotations.json")


def write_crop_records(records: Sequence[CropRecord], out_dir) -> list[dict]:
    """PNG per surviving crop + manifest.json; returns the manifest."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    manifest = []
    for rec in records:
        entry = {
            "annotation_id": rec.annotation_id,
            "image_id": rec.image_id,
            "label": rec.category_id,
            "status": rec.status,
        }
        if rec.status == "ok":
            name = f"crop_a{rec.annotation_id:06d}.png"
            if not cv2.imwrite(str(root / name), rec.pixels):
                raise OSError(f"failed to write {root / name}")
            entry["file_name"] = name
        else:
            entry["reason"] = rec.reason
        manifest.append(entry)
    (root / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8"
    )
    return manifest


def load_image(path) -> np.ndarray:
    im = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if im is None:
        raise ParseError(f"{path}: cannot read image")
    return im
