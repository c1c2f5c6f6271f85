"""Empirical upper-bound AP from classifier-labeled targets.

Strategy 1 turns every ground-truth box into one detection carrying the
classifier's predicted label and confidence: localization is perfect,
so the resulting AP depends only on the classifier and is identical at
every IOU threshold.  Strategy 2 first aggregates each target's
prediction with its neighborhood (most confident box, or most frequent
label), modeling the visual context around the object.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .config import EvalConfig
from .data import (
    ClassifierOutput,
    Dataset,
    Detection,
    NeighborPrediction,
    ValidationError,
)
from .evaluate import EvalReport, evaluate


class AggregationMode(Enum):
    MOST_CONFIDENT_BOX = "most_confident"
    MOST_FREQUENT_LABEL = "most_frequent"


def _outputs_by_annotation(
    ds: Dataset, outputs: Sequence[ClassifierOutput]
) -> dict[int, ClassifierOutput]:
    by_id = {}
    for out in outputs:
        if out.annotation_id in by_id:
            raise ValidationError(
                f"duplicate classifier output for annotation {out.annotation_id}"
            )
        by_id[out.annotation_id] = out
    missing = [a.id for a in ds.annotations if a.id not in by_id]
    if missing:
        raise ValidationError(
            f"classifier outputs missing for annotations {missing[:10]}"
            + ("..." if len(missing) > 10 else "")
        )
    return by_id


def detections_from_outputs(
    ds: Dataset,
    outputs: Sequence[ClassifierOutput],
    *,
    constant_confidence: float | None = None,
) -> list[Detection]:
    """One detection per target: its own box, the classifier's label/score."""
    if constant_confidence is not None and not (0.0 <= constant_confidence <= 1.0):
        raise ValidationError(
            f"constant_confidence {constant_confidence} outside [0, 1]"
        )
    by_id = _outputs_by_annotation(ds, outputs)
    dets = []
    for ann in ds.annotations:
        out = by_id[ann.id]
        score = out.confidence if constant_confidence is None else constant_confidence
        dets.append(Detection(ann.image_id, out.label, ann.bbox, score))
    return dets


def uap_strategy1(
    ds: Dataset,
    outputs: Sequence[ClassifierOutput],
    cfg: EvalConfig | None = None,
    *,
    constant_confidence: float | None = None,
) -> EvalReport:
    """Upper-bound AP with per-target classifier predictions as detections."""
    dets = detections_from_outputs(
        ds, outputs, constant_confidence=constant_confidence
    )
    return evaluate(ds, dets, cfg or EvalConfig())


def aggregate_neighborhood(
    preds: Sequence[NeighborPrediction], mode: AggregationMode
) -> tuple[int, float]:
    """Reduce a non-empty neighborhood to one (label, confidence).

    most_confident: the label of the globally most confident prediction
    (ties: first in list order).  most_frequent: the modal label, scored
    by its best confidence; modal ties prefer the higher best confidence,
    then the lower label id.
    """
    if not preds:
        raise ValidationError("aggregate_neighborhood requires at least one prediction")
    if mode is AggregationMode.MOST_CONFIDENT_BOX:
        best = max(preds, key=lambda p: p.confidence)
        return best.label, best.confidence
    if mode is AggregationMode.MOST_FREQUENT_LABEL:
        stats: dict[int, list] = {}
        for p in preds:
            entry = stats.setdefault(p.label, [0, 0.0])
            entry[0] += 1
            entry[1] = max(entry[1], p.confidence)
        best_label = min(
            stats, key=lambda lab: (-stats[lab][0], -stats[lab][1], lab)
        )
        return best_label, stats[best_label][1]
    raise ValueError(f"unknown aggregation mode {mode!r}")


def uap_strategy2(
    ds: Dataset,
    outputs: Sequence[ClassifierOutput],
    mode: AggregationMode = AggregationMode.MOST_CONFIDENT_BOX,
    cfg: EvalConfig | None = None,
    *,
    include_target: bool = True,
) -> EvalReport:
    """Upper-bound AP with neighborhood-aggregated labels.

    The pool for each target is its own prediction plus its neighbors;
    include_target=False restricts to neighbors only (targets without
    neighbors then fail validation).  With every neighbor list empty the
    result equals uap_strategy1.
    """
    by_id = _outputs_by_annotation(ds, outputs)
    dets = []
    for ann in ds.annotations:
        out = by_id[ann.id]
        pool = list(out.neighbors)
        if include_target:
            pool.insert(0, NeighborPrediction(ann.bbox, out.label, out.confidence))
        if not pool:
            raise ValidationError(
                f"annotation {ann.id} has no neighborhood predictions "
                "(include_target=False with empty neighbors)"
            )
        label, confidence = aggregate_neighborhood(pool, mode)
        dets.append(Detection(ann.image_id, label, ann.bbox, confidence))
    return evaluate(ds, dets, cfg or EvalConfig())


@dataclass(frozen=True)
class Correlation:
    slope: float
    intercept: float
    r2: float
    n: int


def correlate_accuracy_uap(points: Sequence[tuple[float, float]]) -> Correlation:
    """Least-squares line through (classifier accuracy, upper-bound AP) points.

    Needs >= 2 points with non-constant x.  A constant y is reported as
    slope 0, R^2 = 0 (the fit explains nothing, there is nothing to
    explain).
    """
    if len(points) < 2:
        raise ValidationError(f"need at least 2 points, got {len(points)}")
    xs = [float(x) for x, _ in points]
    ys = [float(y) for _, y in points]
    mx = statistics.mean(xs)
    my = statistics.mean(ys)
    sxx = sum((x - mx) ** 2 for x in xs)
    if sxx == 0.0:
        raise ValidationError("x values are constant; slope undefined")
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    slope = sxy / sxx
    intercept = my - slope * mx
    ss_tot = sum((y - my) ** 2 for y in ys)
    if ss_tot == 0.0:
        return Correlation(slope=0.0, intercept=my, r2=0.0, n=len(points))
    ss_res = sum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys))
    return Correlation(
        slope=slope, intercept=intercept, r2=1.0 - ss_res / ss_tot, n=len(points)
    )
