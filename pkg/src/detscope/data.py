"""Data model and validated ingestion.

Ground truth uses the COCO instances JSON subset (images, categories,
annotations with xywh boxes); detections use the COCO results list;
classifier outputs are a flat JSON list keyed by annotation id.  All
loaders fail loudly: schema problems raise ParseError, semantic
problems (dangling ids, bad boxes, out-of-range scores) raise
ValidationError naming the offending record.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .config import EvalConfig
from .geom import BBox


class DetscopeError(Exception):
    """Base class for toolkit errors."""


class ParseError(DetscopeError):
    """Malformed input file (bad JSON, missing/ill-typed fields)."""


class ValidationError(DetscopeError):
    """Well-formed input with inconsistent content."""


@dataclass(frozen=True)
class ImageInfo:
    id: int
    width: int
    height: int
    file_name: str = ""


@dataclass(frozen=True)
class Category:
    id: int
    name: str = ""


@dataclass(frozen=True)
class GroundTruth:
    id: int
    image_id: int
    category_id: int
    bbox: BBox
    area: float
    size_class: str


@dataclass(frozen=True)
class Detection:
    image_id: int
    category_id: int
    bbox: BBox
    score: float


@dataclass(frozen=True)
class NeighborPrediction:
    bbox: BBox | None
    label: int
    confidence: float


@dataclass(frozen=True)
class ClassifierOutput:
    annotation_id: int
    label: int
    confidence: float
    neighbors: tuple[NeighborPrediction, ...] = ()


def size_bucket(area: float, config: EvalConfig | None = None) -> str:
    """'small' for area <= t_small, 'medium' up to t_medium, else 'large'."""
    cfg = config or EvalConfig()
    if area <= 0:
        raise ValidationError(f"area must be positive, got {area}")
    t_small, t_medium = cfg.area_thresholds
    if area <= t_small:
        return "small"
    if area <= t_medium:
        return "medium"
    return "large"


@dataclass
class Dataset:
    """Immutable-by-convention container with id lookups."""

    images: tuple[ImageInfo, ...]
    categories: tuple[Category, ...]
    annotations: tuple[GroundTruth, ...]
    _images_by_id: dict = field(init=False, repr=False, compare=False)
    _categories_by_id: dict = field(init=False, repr=False, compare=False)
    _annotations_by_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.images = tuple(self.images)
        self.categories = tuple(self.categories)
        self.annotations = tuple(self.annotations)
        self._images_by_id = _unique_index(self.images, "image")
        self._categories_by_id = _unique_index(self.categories, "category")
        self._annotations_by_id = _unique_index(self.annotations, "annotation")
        for ann in self.annotations:
            if ann.image_id not in self._images_by_id:
                raise ValidationError(
                    f"annotation {ann.id}: unknown image_id {ann.image_id}"
                )
            if ann.category_id not in self._categories_by_id:
                raise ValidationError(
                    f"annotation {ann.id}: unknown category_id {ann.category_id}"
                )

    def image(self, image_id: int) -> ImageInfo:
        return self._images_by_id[image_id]

    def category(self, category_id: int) -> Category:
        return self._categories_by_id[category_id]

    def annotation(self, annotation_id: int) -> GroundTruth:
        return self._annotations_by_id[annotation_id]

    @property
    def image_ids(self) -> tuple[int, ...]:
        return tuple(im.id for im in self.images)

    @property
    def category_ids(self) -> tuple[int, ...]:
        return tuple(c.id for c in self.categories)

    def annotations_for(self, image_id: int, category_id: int | None = None):
        for ann in self.annotations:
            if ann.image_id != image_id:
                continue
            if category_id is not None and ann.category_id != category_id:
                continue
            yield ann


def _unique_index(items, kind: str) -> dict:
    out = {}
    for item in items:
        if item.id in out:
            raise ValidationError(f"duplicate {kind} id {item.id}")
        out[item.id] = item
    return out


def _load_json(path) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc


def _require(record: Mapping, key: str, where: str):
    if key not in record:
        raise ParseError(f"{where}: missing required field {key!r}")
    return record[key]


def _as_number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _as_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"{where}: expected an integer, got {value!r}")
    return value


def _parse_bbox(raw, where: str) -> BBox:
    if not isinstance(raw, Sequence) or len(raw) != 4:
        raise ParseError(f"{where}: bbox must be [x, y, w, h], got {raw!r}")
    x, y, w, h = (_as_number(v, where) for v in raw)
    if w <= 0 or h <= 0:
        raise ValidationError(f"{where}: non-positive box extent w={w}, h={h}")
    return BBox(x, y, w, h)


def load_dataset(
    path,
    config: EvalConfig | None = None,
    *,
    drop_crowd: bool = False,
) -> Dataset:
    """Load COCO-style instances JSON.

    Records flagged iscrowd/ignore are rejected (ValidationError) unless
    drop_crowd is set, in which case they are silently dropped.  Missing
    annotation areas are computed as w*h.
    """
    cfg = config or EvalConfig()
    raw = _load_json(path)
    if not isinstance(raw, Mapping):
        raise ParseError(f"{path}: top level must be an object")
    images = []
    for rec in _require(raw, "images", str(path)):
        where = f"image {rec.get('id', '?')}"
        images.append(
            ImageInfo(
                id=_as_int(_require(rec, "id", where), where),
                width=_as_int(_require(rec, "width", where), where),
                height=_as_int(_require(rec, "height", where), where),
                file_name=str(rec.get("file_name", "")),
            )
        )
    categories = []
    for rec in _require(raw, "categories", str(path)):
        where = f"category {rec.get('id', '?')}"
        categories.append(
            Category(
                id=_as_int(_require(rec, "id", where), where),
                name=str(rec.get("name", "")),
            )
        )
    annotations = []
    for rec in _require(raw, "annotations", str(path)):
        where = f"annotation {rec.get('id', '?')}"
        if rec.get("iscrowd") or rec.get("ignore"):
            if drop_crowd:
                continue
            raise ValidationError(
                f"{where}: crowd/ignore regions are not supported "
                "(pass drop_crowd=True to discard them)"
            )
        bbox = _parse_bbox(_require(rec, "bbox", where), where)
        area = _as_number(rec["area"], where) if "area" in rec else bbox.area
        if area <= 0:
            raise ValidationError(f"{where}: non-positive area {area}")
        annotations.append(
            GroundTruth(
                id=_as_int(_require(rec, "id", where), where),
                image_id=_as_int(_require(rec, "image_id", where), where),
                category_id=_as_int(_require(rec, "category_id", where), where),
                bbox=bbox,
                area=area,
                size_class=size_bucket(area, cfg),
            )
        )
    return Dataset(tuple(images), tuple(categories), tuple(annotations))


def save_dataset(ds: Dataset, path) -> None:
    """Write a dataset back to COCO-style JSON (round-trips with load_dataset)."""
    doc = {
        "images": [
            {"id": im.id, "width": im.width, "height": im.height, "file_name": im.file_name}
            for im in ds.images
        ],
        "categories": [{"id": c.id, "name": c.name} for c in ds.categories],
        "annotations": [
            {
                "id": a.id,
                "image_id": a.image_id,
                "category_id": a.category_id,
                "bbox": list(a.bbox.as_xywh()),
                "area": a.area,
                "iscrowd": 0,
            }
            for a in ds.annotations
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")


def load_detections(path, ds: Dataset) -> list[Detection]:
    """Load a COCO results list; input order is preserved."""
    raw = _load_json(path)
    if not isinstance(raw, list):
        raise ParseError(f"{path}: detections must be a JSON list")
    out = []
    for i, rec in enumerate(raw):
        where = f"detection #{i}"
        if not isinstance(rec, Mapping):
            raise ParseError(f"{where}: expected an object, got {rec!r}")
        image_id = _as_int(_require(rec, "image_id", where), where)
        category_id = _as_int(_require(rec, "category_id", where), where)
        if image_id not in ds._images_by_id:
            raise ValidationError(f"{where}: unknown image_id {image_id}")
        if category_id not in ds._categories_by_id:
            raise ValidationError(f"{where}: unknown category_id {category_id}")
        score = _as_number(_require(rec, "score", where), where)
        if not (0.0 <= score <= 1.0):
            raise ValidationError(f"{where}: score {score} outside [0, 1]")
        out.append(
            Detection(
                image_id=image_id,
                category_id=category_id,
                bbox=_parse_bbox(_require(rec, "bbox", where), where),
                score=score,
            )
        )
    return out


def save_detections(dets: Iterable[Detection], path) -> None:
    doc = [
        {
            "image_id": d.image_id,
            "category_id": d.category_id,
            "bbox": list(d.bbox.as_xywh()),
            "score": d.score,
        }
        for d in dets
    ]
    Path(path).write_text(json.dumps(doc, indent=2), encoding="utf-8")


def load_classifier_outputs(path, ds: Dataset) -> list[ClassifierOutput]:
    """Load per-annotation classifier predictions.

    Schema: [{"annotation_id", "label", "confidence", "neighbors"?}],
    where neighbors is a list of {"bbox"?, "label", "confidence"}.  At
    most one record per annotation.
    """
    raw = _load_json(path)
    if not isinstance(raw, list):
        raise ParseError(f"{path}: classifier outputs must be a JSON list")
    seen = set()
    out = []
    for i, rec in enumerate(raw):
        where = f"classifier output #{i}"
        if not isinstance(rec, Mapping):
            raise ParseError(f"{where}: expected an object, got {rec!r}")
        ann_id = _as_int(_require(rec, "annotation_id", where), where)
        where = f"classifier output for annotation {ann_id}"
        if ann_id in seen:
            raise ValidationError(f"{where}: duplicate annotation_id")
        seen.add(ann_id)
        if ann_id not in ds._annotations_by_id:
            raise ValidationError(f"{where}: unknown annotation_id")
        label = _as_int(_require(rec, "label", where), where)
        if label not in ds._categories_by_id:
            raise ValidationError(f"{where}: unknown label {label}")
        confidence = _as_number(_require(rec, "confidence", where), where)
        if not (0.0 <= confidence <= 1.0):
            raise ValidationError(f"{where}: confidence {confidence} outside [0, 1]")
        neighbors = []
        for j, nb in enumerate(rec.get("neighbors", [])):
            nb_where = f"{where}, neighbor #{j}"
            nb_label = _as_int(_require(nb, "label", nb_where), nb_where)
            if nb_label not in ds._categories_by_id:
                raise ValidationError(f"{nb_where}: unknown label {nb_label}")
            nb_conf = _as_number(_require(nb, "confidence", nb_where), nb_where)
            if not (0.0 <= nb_conf <= 1.0):
                raise ValidationError(
                    f"{nb_where}: confidence {nb_conf} outside [0, 1]"
                )
            nb_bbox = _parse_bbox(nb["bbox"], nb_where) if "bbox" in nb else None
            neighbors.append(NeighborPrediction(nb_bbox, nb_label, nb_conf))
        out.append(ClassifierOutput(ann_id, label, confidence, tuple(neighbors)))
    return out
