"""Evaluation configuration shared by the data and eval layers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Built with linspace on purpose: several grid points differ from their
# decimal spelling by one ulp (e.g. index 8 is 0.8999999999999999) and the
# matching must use the same doubles as the reference tooling.
DEFAULT_IOU_THRESHOLDS: tuple[float, ...] = tuple(
    np.linspace(0.5, 0.95, 10).tolist()
)
RECALL_POINTS: np.ndarray = np.linspace(0.0, 1.0, 101)

SIZE_CLASSES = ("small", "medium", "large")

INTERPOLATION_MODES = ("coco_101pt", "voc_all_points")


@dataclass(frozen=True)
class EvalConfig:
    """Knobs for AP evaluation.

    area_thresholds split ground truth into small/medium/large at
    (32**2, 96**2); max_dets_per_image caps ranked detections per
    (image, category) pool, None for unlimited.
    """

    iou_thresholds: tuple[float, ...] = DEFAULT_IOU_THRESHOLDS
    area_thresholds: tuple[float, float] = (32.0**2, 96.0**2)
    max_dets_per_image: int | None = 100
    interpolation: str = "coco_101pt"

    def __post_init__(self):
        ts = tuple(float(t) for t in self.iou_thresholds)
        if not ts:
            raise ValueError("iou_thresholds must be non-empty")
        if any(not (0.0 < t <= 1.0) for t in ts):
            raise ValueError(f"iou thresholds must lie in (0, 1]: {ts}")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"iou thresholds must be strictly increasing: {ts}")
        object.__setattr__(self, "iou_thresholds", ts)
        t_small, t_medium = self.area_thresholds
        if not (0.0 < t_small < t_medium):
            raise ValueError(f"invalid area thresholds: {self.area_thresholds}")
        if self.max_dets_per_image is not None and self.max_dets_per_image < 1:
            raise ValueError("max_dets_per_image must be >= 1 or None")
        if self.interpolation not in INTERPOLATION_MODES:
            raise ValueError(
                f"interpolation must be one of {INTERPOLATION_MODES}, got {self.interpolation!r}"
            )

    def threshold_index(self, t: float, tol: float = 1e-9) -> int | None:
        """Index of the grid threshold closest to t, if within tol."""
        diffs = [abs(x - t) for x in self.iou_thresholds]
        i = int(np.argmin(diffs))
        return i if diffs[i] <= tol else None
