"""Pure numpy/python kernels.

Fallback twin of the compiled extension; every function must produce
bitwise-identical output to its compiled counterpart (same operations in
the same order per element), which the test suite asserts.
"""

from __future__ import annotations

import numpy as np


def pairwise_iou(dets: np.ndarray, gts: np.ndarray) -> np.ndarray:
    """IOU matrix between (D, 4) and (G, 4) xywh float64 boxes."""
    dets = np.ascontiguousarray(dets, dtype=np.float64)
    gts = np.ascontiguousarray(gts, dtype=np.float64)
    if dets.size == 0 or gts.size == 0:
        return np.zeros((dets.shape[0], gts.shape[0]), dtype=np.float64)
    dx1 = dets[:, 0][:, None]
    dy1 = dets[:, 1][:, None]
    dx2 = (dets[:, 0] + dets[:, 2])[:, None]
    dy2 = (dets[:, 1] + dets[:, 3])[:, None]
    gx1 = gts[:, 0][None, :]
    gy1 = gts[:, 1][None, :]
    gx2 = (gts[:, 0] + gts[:, 2])[None, :]
    gy2 = (gts[:, 1] + gts[:, 3])[None, :]
    iw = np.minimum(dx2, gx2) - np.maximum(dx1, gx1)
    ih = np.minimum(dy2, gy2) - np.maximum(dy1, gy1)
    np.clip(iw, 0.0, None, out=iw)
    np.clip(ih, 0.0, None, out=ih)
    inter = iw * ih
    union = (dets[:, 2] * dets[:, 3])[:, None] + (gts[:, 2] * gts[:, 3])[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0.0)
    return out


def greedy_match(
    ious: np.ndarray, thresholds: np.ndarray, gt_ignore: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Greedy score-order matching at each threshold.

    ious is (D, G) with detections already ranked (best first) and gts
    sorted so ignored ones come last.  Returns (det_match, gt_match,
    det_ignore): det_match[t, d] is the matched gt index or -1,
    gt_match[t, g] the matched det index or -1, det_ignore[t, d] is 1
    when the detection matched an ignored gt.  Candidate gts must beat
    the running best IOU (ties go to the later gt); a real (non-ignored)
    candidate is never abandoned for an ignored one.
    """
    ious = np.asarray(ious, dtype=np.float64)
    thresholds = np.asarray(thresholds, dtype=np.float64)
    gt_ignore = np.asarray(gt_ignore, dtype=np.uint8)
    n_det, n_gt = ious.shape
    n_thr = thresholds.shape[0]
    det_match = np.full((n_thr, n_det), -1, dtype=np.int64)
    gt_match = np.full((n_thr, n_gt), -1, dtype=np.int64)
    det_ignore = np.zeros((n_thr, n_det), dtype=np.uint8)
    for ti in range(n_thr):
        t = min(thresholds[ti], 1.0 - 1e-10)
        for d in range(n_det):
            best = t
            m = -1
            for g in range(n_gt):
                if gt_match[ti, g] >= 0:
                    continue
                # gts are sorted ignore-last: once we hold a real match,
                # the remaining ignored ones cannot improve it
                if m >= 0 and gt_ignore[m] == 0 and gt_ignore[g] == 1:
                    break
                if ious[d, g] < best:
                    continue
                best = ious[d, g]
                m = g
            if m < 0:
                continue
            det_match[ti, d] = m
            gt_match[ti, m] = d
            det_ignore[ti, d] = gt_ignore[m]
    return det_match, gt_match, det_ignore
