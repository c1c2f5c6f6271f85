"""Sequential error diagnosis.

Detections are labeled per (image, category) against targets at a
localization threshold: greedy-matched ones are true positives; the
rest split by their best IOU over all targets into background errors
(<= t_bg), duplicates (>= t_loc, i.e. good overlap with an already
taken target) and mislocalizations (in between).  Four fixing stages
then run in a fixed order, each recomputing labels on the current
detection set, and the full mAP is re-evaluated after every stage:

    remove_background -> fix_localization -> remove_duplicates -> fix_misses

The final stage leaves every target covered by an exact, top-scored
detection, so the terminal mAP is 100 regardless of the input.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from . import kernels
from .config import EvalConfig
from .data import Dataset, Detection, GroundTruth
from .evaluate import evaluate


class Stage(Enum):
    REMOVE_BACKGROUND = "remove_background"
    FIX_LOCALIZATION = "fix_localization"
    REMOVE_DUPLICATES = "remove_duplicates"
    FIX_MISSES = "fix_misses"


STAGE_ORDER = (
    Stage.REMOVE_BACKGROUND,
    Stage.FIX_LOCALIZATION,
    Stage.REMOVE_DUPLICATES,
    Stage.FIX_MISSES,
)


class DetectionLabel(Enum):
    TRUE_POSITIVE = "true_positive"
    BACKGROUND = "background"
    MISLOCALIZED = "mislocalized"
    DUPLICATE = "duplicate"


class TargetLabel(Enum):
    MATCHED = "matched"
    MISSED = "missed"


class StageOrderError(RuntimeError):
    """A stage was applied out of the fixed pipeline order."""


@dataclass(frozen=True)
class DiagnoseConfig:
    t_bg: float = 0.1
    t_loc: float = 0.5
    miss_score: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.t_bg < self.t_loc <= 1.0):
            raise ValueError(
                f"need 0 < t_bg < t_loc <= 1, got t_bg={self.t_bg}, t_loc={self.t_loc}"
            )
        if not (0.0 < self.miss_score <= 1.0):
            raise ValueError(f"miss_score must be in (0, 1], got {self.miss_score}")


@dataclass(frozen=True)
class GroupLabels:
    """Labeling of one (image, category) group; indices into the inputs."""

    det_labels: tuple[DetectionLabel, ...]
    target_labels: tuple[TargetLabel, ...]
    det_to_gt: tuple[int | None, ...]      # greedy assignment at t_loc
    det_argmax_gt: tuple[int | None, ...]  # best target over all, None if no targets
    det_max_iou: tuple[float, ...]


def _group_key(d) -> tuple[int, int]:
    return (d.image_id, d.category_id)


def label_errors(
    dets: Sequence[Detection], gts: Sequence[GroundTruth], cfg: DiagnoseConfig | None = None
) -> GroupLabels:
    """Label one group of detections/targets (same image and category).

    Detections need not be pre-sorted; ranking by score (stable for
    ties) happens internally, but returned tuples follow input order.
    """
    cfg = cfg or DiagnoseConfig()
    if len({_group_key(d) for d in dets} | {_group_key(g) for g in gts}) > 1:
        raise ValueError("label_errors expects a single (image, category) group")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    d_boxes = np.array(
        [dets[i].bbox.as_xywh() for i in order], dtype=np.float64
    ).reshape(-1, 4)
    g_boxes = np.array([g.bbox.as_xywh() for g in gts], dtype=np.float64).reshape(-1, 4)
    ious = kernels.pairwise_iou(d_boxes, g_boxes)
    det_match, gt_match, _ = kernels.greedy_match(
        ious, np.array([cfg.t_loc]), np.zeros(len(gts), dtype=np.uint8)
    )
    assigned = det_match[0]  # sorted-order det -> gt index or -1

    n = len(dets)
    det_labels: list = [None] * n
    det_to_gt: list = [None] * n
    det_argmax: list = [None] * n
    det_max: list = [0.0] * n
    for rank, i in enumerate(order):
        if len(gts):
            j = int(np.argmax(ious[rank]))
            best = float(ious[rank, j])
            det_argmax[i] = j if best > 0.0 else None
            det_max[i] = best
        if assigned[rank] >= 0:
            det_labels[i] = DetectionLabel.TRUE_POSITIVE
            det_to_gt[i] = int(assigned[rank])
        elif det_max[i] <= cfg.t_bg:
            det_labels[i] = DetectionLabel.BACKGROUND
        elif det_max[i] >= cfg.t_loc:
            # overlaps an already-taken target well enough to have matched it
            det_labels[i] = DetectionLabel.DUPLICATE
        else:
            det_labels[i] = DetectionLabel.MISLOCALIZED

    unmatched_rows = [r for r in range(len(order)) if assigned[r] < 0]
    target_labels = []
    for j in range(len(gts)):
        if gt_match[0, j] >= 0:
            target_labels.append(TargetLabel.MATCHED)
            continue
        best_free = max((float(ious[r, j]) for r in unmatched_rows), default=0.0)
        target_labels.append(
            TargetLabel.MISSED if best_free <= cfg.t_bg else TargetLabel.MATCHED
        )
    return GroupLabels(
        det_labels=tuple(det_labels),
        target_labels=tuple(target_labels),
        det_to_gt=tuple(det_to_gt),
        det_argmax_gt=tuple(det_argmax),
        det_max_iou=tuple(det_max),
    )


def _snap(det: Detection, gt: GroundTruth) -> Detection:
    return Detection(det.image_id, det.category_id, gt.bbox, det.score)


def apply_stage(
    stage: Stage,
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    cfg: DiagnoseConfig | None = None,
) -> list[Detection]:
    """Apply one fixing stage; assumes all earlier stages already ran.

    Surviving detections keep their input order; fix_misses appends its
    score-1 detections after them, ordered by annotation id.  Use
    DiagnosisPipeline (or diagnose) for enforced stage ordering.
    """
    return _apply_stage_counted(stage, dets, gts, cfg)[0]


def _apply_stage_counted(
    stage: Stage,
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    cfg: DiagnoseConfig | None = None,
) -> tuple[list[Detection], dict[int, int]]:
    if not isinstance(stage, Stage):
        raise ValueError(f"unknown stage {stage!r}")
    cfg = cfg or DiagnoseConfig()
    groups: dict[tuple[int, int], dict] = {}
    for g in gts:
        groups.setdefault(_group_key(g), {"dets": [], "gts": []})["gts"].append(g)
    for i, d in enumerate(dets):
        groups.setdefault(_group_key(d), {"dets": [], "gts": []})["dets"].append((i, d))

    keep: dict[int, Detection] = {i: d for i, d in enumerate(dets)}
    appended: list[tuple[tuple, Detection]] = []
    affected: Counter = Counter()
    for key in sorted(groups):
        g_dets = groups[key]["dets"]
        g_gts = groups[key]["gts"]
        labels = label_errors([d for _, d in g_dets], g_gts, cfg)
        if stage is Stage.REMOVE_BACKGROUND:
            for pos, (i, _) in enumerate(g_dets):
                if labels.det_labels[pos] is DetectionLabel.BACKGROUND:
                    del keep[i]
                    affected[key[1]] += 1
        elif stage is Stage.FIX_LOCALIZATION:
            for pos, (i, d) in enumerate(g_dets):
                if labels.det_labels[pos] is DetectionLabel.MISLOCALIZED:
                    keep[i] = _snap(d, g_gts[labels.det_argmax_gt[pos]])
                    affected[key[1]] += 1
        elif stage is Stage.REMOVE_DUPLICATES:
            for pos, (i, _) in enumerate(g_dets):
                if labels.det_labels[pos] is DetectionLabel.DUPLICATE:
                    del keep[i]
                    affected[key[1]] += 1
        elif stage is Stage.FIX_MISSES:
            # snap every matched detection onto its target, then cover
            # the missed targets with top-scored detections
            for pos, (i, d) in enumerate(g_dets):
                if labels.det_to_gt[pos] is not None:
                    keep[i] = _snap(d, g_gts[labels.det_to_gt[pos]])
            for j, g in enumerate(g_gts):
                if labels.target_labels[j] is TargetLabel.MISSED:
                    appended.append(
                        (
                            (g.image_id, g.category_id, g.id),
                            Detection(g.image_id, g.category_id, g.bbox, cfg.miss_score),
                        )
                    )
                    affected[key[1]] += 1
    out = [keep[i] for i in sorted(keep)]
    out.extend(d for _, d in sorted(appended, key=lambda kd: kd[0]))
    return out, dict(affected)


class DiagnosisPipeline:
    """Stage driver enforcing the fixed order."""

    def __init__(
        self,
        dets: Sequence[Detection],
        gts: Sequence[GroundTruth],
        cfg: DiagnoseConfig | None = None,
    ):
        self.cfg = cfg or DiagnoseConfig()
        self._dets = list(dets)
        self._gts = tuple(gts)
        self._cursor = 0

    @property
    def detections(self) -> list[Detection]:
        return list(self._dets)

    @property
    def next_stage(self) -> Stage | None:
        if self._cursor >= len(STAGE_ORDER):
            return None
        return STAGE_ORDER[self._cursor]

    def apply(self, stage: Stage) -> tuple[list[Detection], dict[int, int]]:
        expected = self.next_stage
        if expected is None:
            raise StageOrderError(f"pipeline already finished; cannot apply {stage}")
        if stage is not expected:
            raise StageOrderError(
                f"stage {stage.value!r} applied out of order; expected {expected.value!r}"
            )
        self._dets, affected = _apply_stage_counted(stage, self._dets, self._gts, self.cfg)
        self._cursor += 1
        return list(self._dets), affected


@dataclass
class DiagnosisReport:
    """mAP trajectory through the fixing stages (x100 scale)."""

    map_baseline: float | None
    map_by_stage: dict[str, float | None]
    affected_by_stage: dict[str, dict[int, int]]
    label_counts: dict[int, dict[str, int]]
    n_detections_start: int
    n_detections_end: int

    def sequence(self) -> tuple[float | None, ...]:
        return (self.map_baseline,) + tuple(
            self.map_by_stage[s.value] for s in STAGE_ORDER
        )

    def to_dict(self) -> dict:
        return {
            "map_baseline": self.map_baseline,
            "map_by_stage": dict(self.map_by_stage),
            "affected_by_stage": {
                s: {str(c): n for c, n in per_cat.items()}
                for s, per_cat in self.affected_by_stage.items()
            },
            "label_counts": {
                str(c): dict(v) for c, v in self.label_counts.items()
            },
            "counts": {
                "detections_start": self.n_detections_start,
                "detections_end": self.n_detections_end,
            },
        }


def _baseline_label_counts(
    dets: Sequence[Detection], gts: Sequence[GroundTruth], cfg: DiagnoseConfig
) -> dict[int, dict[str, int]]:
    groups: dict[tuple[int, int], dict] = {}
    for g in gts:
        groups.setdefault(_group_key(g), {"dets": [], "gts": []})["gts"].append(g)
    for d in dets:
        groups.setdefault(_group_key(d), {"dets": [], "gts": []})["dets"].append(d)
    out: dict[int, Counter] = {}
    for key in sorted(groups):
        labels = label_errors(groups[key]["dets"], groups[key]["gts"], cfg)
        c = out.setdefault(key[1], Counter())
        for lab in labels.det_labels:
            c[lab.value] += 1
        for lab in labels.target_labels:
            if lab is TargetLabel.MISSED:
                c["missed_target"] += 1
    return {cat: dict(c) for cat, c in out.items()}


def diagnose(
    ds: Dataset,
    dets: Sequence[Detection],
    eval_cfg: EvalConfig | None = None,
    cfg: DiagnoseConfig | None = None,
) -> DiagnosisReport:
    """Run the four stages, re-evaluating mAP after each."""
    eval_cfg = eval_cfg or EvalConfig()
    cfg = cfg or DiagnoseConfig()

    def _map(detections) -> float | None:
        return evaluate(
            ds, detections, eval_cfg, with_size_buckets=False
        ).map

    label_counts = _baseline_label_counts(dets, ds.annotations, cfg)
    pipeline = DiagnosisPipeline(dets, ds.annotations, cfg)
    baseline = _map(dets)
    map_by_stage: dict[str, float | None] = {}
    affected_by_stage: dict[str, dict[int, int]] = {}
    current = list(dets)
    for stage in STAGE_ORDER:
        current, affected = pipeline.apply(stage)
        map_by_stage[stage.value] = _map(current)
        affected_by_stage[stage.value] = affected
    return DiagnosisReport(
        map_baseline=baseline,
        map_by_stage=map_by_stage,
        affected_by_stage=affected_by_stage,
        label_counts=label_counts,
        n_detections_start=len(dets),
        n_detections_end=len(current),
    )
