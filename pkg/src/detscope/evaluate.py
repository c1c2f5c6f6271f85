"""Greedy-matching AP evaluation over an IOU threshold grid.

Follows the canonical protocol: detections ranked by score, each taking
the best still-free target at or above the threshold; per-category
precision/recall accumulated over the pooled ranking; AP read off a
101-point interpolated curve (or the all-points envelope variant);
categories without targets are excluded from every mean.  Size buckets
re-run the matching with out-of-bucket targets ignored: a detection
matched to an ignored target is dropped from the ranking, as is an
unmatched detection whose own area falls outside the bucket.
"""

from __future__ import annotations

import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .config import RECALL_POINTS, EvalConfig
from .data import Dataset, Detection, GroundTruth, ValidationError, size_bucket

_BUCKET_ALL = "all"
_BUCKETS = (_BUCKET_ALL, "small", "medium", "large")


@dataclass(frozen=True)
class PRCurve:
    """A ranked detection list reduced to (score, is_tp) plus target count."""

    scores: tuple[float, ...]
    is_tp: tuple[bool, ...]
    n_gt: int

    def __post_init__(self):
        if len(self.scores) != len(self.is_tp):
            raise ValueError("scores and is_tp must have equal length")
        if self.n_gt < 0:
            raise ValueError("n_gt must be >= 0")
        if any(a < b for a, b in zip(self.scores, self.scores[1:])):
            raise ValueError("scores must be ranked (non-increasing)")
        if self.n_gt == 0 and any(self.is_tp):
            raise ValueError("cannot have true positives with n_gt = 0")

    @property
    def recall(self) -> np.ndarray:
        if self.n_gt == 0:
            return np.zeros(len(self.scores))
        return np.cumsum(np.asarray(self.is_tp, dtype=np.float64)) / self.n_gt

    @property
    def precision(self) -> np.ndarray:
        tp = np.cumsum(np.asarray(self.is_tp, dtype=np.float64))
        ranks = np.arange(1, len(self.scores) + 1, dtype=np.float64)
        return tp / ranks


def _ap_coco_101(rc: np.ndarray, pr: np.ndarray) -> float:
    """101-point interpolated AP from monotone recall / raw precision arrays."""
    if rc.size == 0:
        return 0.0
    env = np.maximum.accumulate(pr[::-1])[::-1]
    q = np.zeros(RECALL_POINTS.shape[0])
    inds = np.searchsorted(rc, RECALL_POINTS, side="left")
    valid = inds < rc.shape[0]
    q[valid] = env[inds[valid]]
    return float(np.mean(q))


def _ap_voc_all_points(rc: np.ndarray, pr: np.ndarray) -> float:
    """All-points (area under the precision envelope) AP."""
    if rc.size == 0:
        return 0.0
    mrec = np.concatenate(([0.0], rc, [1.0]))
    mpre = np.concatenate(([0.0], pr, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    idx = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[idx + 1] - mrec[idx]) * mpre[idx + 1]))


_AP_FUNCS = {"coco_101pt": _ap_coco_101, "voc_all_points": _ap_voc_all_points}


def average_precision(curve: PRCurve, mode: str = "coco_101pt") -> float:
    """AP in [0, 1] for a ranked curve; undefined (raises) when n_gt = 0."""
    if mode not in _AP_FUNCS:
        raise ValueError(f"unknown interpolation mode {mode!r}")
    if curve.n_gt == 0:
        raise ValueError("average precision is undefined without targets")
    if not curve.scores:
        return 0.0
    return _AP_FUNCS[mode](curve.recall, curve.precision)


@dataclass(frozen=True)
class MatchResult:
    """Greedy assignment of ranked detections to targets at one threshold.

    Indices refer to the input sequences.  det_max_iou/det_argmax_gt
    describe the best target over *all* targets (assigned or not), which
    the error-diagnosis labeling needs; max IOU is 0.0 when there are no
    targets.
    """

    det_to_gt: tuple[int | None, ...]
    gt_to_det: tuple[int | None, ...]
    det_max_iou: tuple[float, ...]
    det_argmax_gt: tuple[int | None, ...]


def match_image_category(
    dets: Sequence[Detection], gts: Sequence[GroundTruth], threshold: float
) -> MatchResult:
    """Match score-ranked detections of one image+category at one threshold."""
    if not (0.0 < threshold <= 1.0):
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    if any(a.score < b.score for a, b in zip(dets, dets[1:])):
        raise ValueError("detections must be ranked by score (descending)")
    d_boxes = np.array([d.bbox.as_xywh() for d in dets], dtype=np.float64).reshape(-1, 4)
    g_boxes = np.array([g.bbox.as_xywh() for g in gts], dtype=np.float64).reshape(-1, 4)
    ious = kernels.pairwise_iou(d_boxes, g_boxes)
    det_match, gt_match, _ = kernels.greedy_match(
        ious, np.array([threshold]), np.zeros(len(gts), dtype=np.uint8)
    )
    if len(gts):
        argmax = ious.argmax(axis=1)
        max_iou = ious[np.arange(len(dets)), argmax] if len(dets) else np.zeros(0)
    else:
        argmax = np.full(len(dets), -1)
        max_iou = np.zeros(len(dets))
    return MatchResult(
        det_to_gt=tuple(int(m) if m >= 0 else None for m in det_match[0]),
        gt_to_det=tuple(int(m) if m >= 0 else None for m in gt_match[0]),
        det_max_iou=tuple(float(v) for v in max_iou),
        det_argmax_gt=tuple(
            int(a) if len(gts) and max_iou[i] > 0.0 else None
            for i, a in enumerate(argmax)
        ),
    )


@dataclass(frozen=True)
class CategoryResult:
    category_id: int
    name: str
    ap: float | None
    ap50: float | None
    ap75: float | None
    ap_small: float | None
    ap_medium: float | None
    ap_large: float | None
    n_gt: int


@dataclass
class EvalReport:
    """Evaluation summary; every AP/recall value is on the x100 scale."""

    map: float | None
    ap50: float | None
    ap75: float | None
    ap_small: float | None
    ap_medium: float | None
    ap_large: float | None
    per_iou: dict[float, float | None]
    recall_by_iou: dict[float, float | None]
    per_category: tuple[CategoryResult, ...]
    interpolation: str
    iou_thresholds: tuple[float, ...]
    n_images: int
    n_annotations: int
    n_detections: int
    curves: dict = field(default_factory=dict, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "metrics": {
                "mAP": self.map,
                "AP50": self.ap50,
                "AP75": self.ap75,
                "AP_small": self.ap_small,
                "AP_medium": self.ap_medium,
                "AP_large": self.ap_large,
            },
            "per_iou_ap": {_thr_key(t): v for t, v in self.per_iou.items()},
            "recall_by_iou": {_thr_key(t): v for t, v in self.recall_by_iou.items()},
            "per_category": [
                {
                    "id": c.category_id,
                    "name": c.name,
                    "ap": c.ap,
                    "ap50": c.ap50,
                    "ap75": c.ap75,
                    "ap_small": c.ap_small,
                    "ap_medium": c.ap_medium,
                    "ap_large": c.ap_large,
                    "n_gt": c.n_gt,
                }
                for c in self.per_category
            ],
            "interpolation": self.interpolation,
            "iou_thresholds": list(self.iou_thresholds),
            "counts": {
                "images": self.n_images,
                "annotations": self.n_annotations,
                "detections": self.n_detections,
            },
        }


def _thr_key(t: float) -> str:
    return format(t, ".6g")


def _mean_or_none(values: list[float]) -> float | None:
    # statistics.mean sums exactly over rationals, so a mean of identical
    # floats returns that float bit-for-bit (np.mean double-rounds)
    return statistics.mean(values) if values else None


def _rank_key(det: Detection, index: int):
    b = det.bbox
    return (-det.score, det.image_id, b.x, b.y, b.w, b.h, index)


@dataclass
class _GroupResult:
    # per bucket: (keys, tp[T, D] bool, ignore[T, D] bool) plus gt counts
    per_bucket: dict
    n_gt_bucket: dict


def _eval_group(
    dets: list[tuple[Detection, int]],
    gts: list[GroundTruth],
    cfg: EvalConfig,
    buckets: tuple[str, ...],
    thresholds: np.ndarray,
) -> _GroupResult:
    dets = sorted(dets, key=lambda di: _rank_key(di[0], di[1]))
    if cfg.max_dets_per_image is not None:
        dets = dets[: cfg.max_dets_per_image]
    d_boxes = np.array([d.bbox.as_xywh() for d, _ in dets], dtype=np.float64).reshape(-1, 4)
    g_boxes = np.array([g.bbox.as_xywh() for g in gts], dtype=np.float64).reshape(-1, 4)
    ious = kernels.pairwise_iou(d_boxes, g_boxes)
    keys = [_rank_key(d, i) for d, i in dets]
    det_buckets = [size_bucket(d.bbox.area, cfg) for d, _ in dets]
    per_bucket = {}
    n_gt_bucket = {}
    for bucket in buckets:
        if bucket == _BUCKET_ALL:
            gt_ignore = np.zeros(len(gts), dtype=np.uint8)
        else:
            gt_ignore = np.array(
                [g.size_class != bucket for g in gts], dtype=np.uint8
            )
        n_gt_bucket[bucket] = int(len(gts) - int(gt_ignore.sum()))
        order = np.argsort(gt_ignore, kind="stable")
        det_match, _, det_ig = kernels.greedy_match(
            ious[:, order], thresholds, gt_ignore[order]
        )
        tp = det_match >= 0
        ignore = det_ig.astype(bool)
        if bucket != _BUCKET_ALL and len(dets):
            out_of_bucket = np.array(
                [db != bucket for db in det_buckets], dtype=bool
            )
            ignore |= (~tp) & out_of_bucket[None, :]
        per_bucket[bucket] = (keys, tp & ~ignore, ignore)
    return _GroupResult(per_bucket, n_gt_bucket)


def evaluate(
    ds: Dataset,
    dets: Sequence[Detection],
    cfg: EvalConfig | None = None,
    *,
    threads: int = 1,
    with_size_buckets: bool = True,
    collect_curves: bool = False,
) -> EvalReport:
    """Score detections against a dataset.

    Deterministic: the ranking tie-breaks on (image id, box coords,
    input position), so permuting the detection list leaves the report
    bitwise identical.  threads > 1 parallelizes per-(image, category)
    matching; the merge order is fixed, so results do not depend on it.
    """
    cfg = cfg or EvalConfig()
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    for i, d in enumerate(dets):
        if d.image_id not in ds._images_by_id:
            raise ValidationError(f"detection #{i}: unknown image_id {d.image_id}")
        if d.category_id not in ds._categories_by_id:
            raise ValidationError(f"detection #{i}: unknown category_id {d.category_id}")
        if not (0.0 <= d.score <= 1.0):
            raise ValidationError(f"detection #{i}: score {d.score} outside [0, 1]")

    buckets = _BUCKETS if with_size_buckets else (_BUCKET_ALL,)
    thresholds = np.asarray(cfg.iou_thresholds, dtype=np.float64)
    n_thr = thresholds.shape[0]

    groups: dict[tuple[int, int], dict] = {}
    for g in ds.annotations:
        groups.setdefault((g.image_id, g.category_id), {"dets": [], "gts": []})[
            "gts"
        ].append(g)
    for i, d in enumerate(dets):
        groups.setdefault((d.image_id, d.category_id), {"dets": [], "gts": []})[
            "dets"
        ].append((d, i))

    keys_sorted = sorted(groups)
    if threads == 1:
        results = {
            k: _eval_group(groups[k]["dets"], groups[k]["gts"], cfg, buckets, thresholds)
            for k in keys_sorted
        }
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futs = {
                k: pool.submit(
                    _eval_group, groups[k]["dets"], groups[k]["gts"], cfg, buckets, thresholds
                )
                for k in keys_sorted
            }
            results = {k: f.result() for k, f in futs.items()}

    # pool per (category, bucket) over images, rank globally, accumulate
    cat_ap: dict[int, dict[str, list[float] | None]] = {}
    cat_recall: dict[int, list[float] | None] = {}
    cat_ngt: dict[int, int] = {}
    curves: dict = {}
    for cat in ds.category_ids:
        cat_keys = [k for k in keys_sorted if k[1] == cat]
        cat_ap[cat] = {}
        for bucket in buckets:
            n_gt = sum(results[k].n_gt_bucket[bucket] for k in cat_keys)
            if bucket == _BUCKET_ALL:
                cat_ngt[cat] = n_gt
            if n_gt == 0:
                cat_ap[cat][bucket] = None
                if bucket == _BUCKET_ALL:
                    cat_recall[cat] = None
                continue
            rows = []
            for k in cat_keys:
                keys, tp, ignore = results[k].per_bucket[bucket]
                for col, key in enumerate(keys):
                    rows.append((key, tp[:, col], ignore[:, col]))
            rows.sort(key=lambda r: r[0])
            aps = []
            recalls = []
            if rows:
                tp_mat = np.stack([r[1] for r in rows], axis=1)
                ig_mat = np.stack([r[2] for r in rows], axis=1)
            else:
                tp_mat = np.zeros((n_thr, 0), dtype=bool)
                ig_mat = np.zeros((n_thr, 0), dtype=bool)
            fp_mat = ~tp_mat & ~ig_mat
            tp_cum = np.cumsum(tp_mat, axis=1, dtype=np.float64)
            fp_cum = np.cumsum(fp_mat, axis=1, dtype=np.float64)
            for ti in range(n_thr):
                rc = tp_cum[ti] / n_gt
                denom = tp_cum[ti] + fp_cum[ti]
                pr = np.divide(
                    tp_cum[ti], denom, out=np.zeros_like(denom), where=denom > 0
                )
                aps.append(_AP_FUNCS[cfg.interpolation](rc, pr))
                recalls.append(float(rc[-1]) if rc.size else 0.0)
                if collect_curves and bucket == _BUCKET_ALL:
                    curves[(cat, float(thresholds[ti]))] = {
                        "recall": rc.tolist(),
                        "precision": pr.tolist(),
                        "scores": [-r[0][0] for r in rows],
                    }
            cat_ap[cat][bucket] = aps
            if bucket == _BUCKET_ALL:
                cat_recall[cat] = recalls

    defined = [c for c in ds.category_ids if cat_ap[c][_BUCKET_ALL] is not None]
    per_iou: dict[float, float | None] = {}
    recall_by_iou: dict[float, float | None] = {}
    for ti, t in enumerate(cfg.iou_thresholds):
        per_iou[t] = _scale(_mean_or_none([cat_ap[c][_BUCKET_ALL][ti] for c in defined]))
        recall_by_iou[t] = _scale(_mean_or_none([cat_recall[c][ti] for c in defined]))
    map_value = _scale(
        _mean_or_none(
            [
                statistics.mean(cat_ap[c][_BUCKET_ALL][ti] for c in defined)
                for ti in range(n_thr)
            ]
        )
        if defined
        else None
    )

    i50 = cfg.threshold_index(0.5)
    i75 = cfg.threshold_index(0.75)
    bucket_agg = {}
    for bucket in ("small", "medium", "large"):
        if not with_size_buckets:
            bucket_agg[bucket] = None
            continue
        vals = [
            statistics.mean(cat_ap[c][bucket])
            for c in ds.category_ids
            if cat_ap[c].get(bucket) is not None
        ]
        bucket_agg[bucket] = _scale(_mean_or_none(vals))

    per_category = []
    for c in ds.category_ids:
        aps = cat_ap[c][_BUCKET_ALL]
        per_category.append(
            CategoryResult(
                category_id=c,
                name=ds.category(c).name,
                ap=_scale(statistics.mean(aps)) if aps is not None else None,
                ap50=_scale(aps[i50]) if aps is not None and i50 is not None else None,
                ap75=_scale(aps[i75]) if aps is not None and i75 is not None else None,
                ap_small=_scale(_maybe_mean(cat_ap[c].get("small"))),
                ap_medium=_scale(_maybe_mean(cat_ap[c].get("medium"))),
                ap_large=_scale(_maybe_mean(cat_ap[c].get("large"))),
                n_gt=cat_ngt[c],
            )
        )

    return EvalReport(
        map=map_value,
        ap50=per_iou[cfg.iou_thresholds[i50]] if i50 is not None else None,
        ap75=per_iou[cfg.iou_thresholds[i75]] if i75 is not None else None,
        ap_small=bucket_agg["small"],
        ap_medium=bucket_agg["medium"],
        ap_large=bucket_agg["large"],
        per_iou=per_iou,
        recall_by_iou=recall_by_iou,
        per_category=tuple(per_category),
        interpolation=cfg.interpolation,
        iou_thresholds=cfg.iou_thresholds,
        n_images=len(ds.images),
        n_annotations=len(ds.annotations),
        n_detections=len(dets),
        curves=curves,
    )


def _maybe_mean(values):
    return statistics.mean(values) if values else None


def _scale(v: float | None) -> float | None:
    return None if v is None else 100.0 * v
