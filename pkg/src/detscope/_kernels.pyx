# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels; must stay bitwise-identical to _kernels_py."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def pairwise_iou(dets, gts):
    """IOU matrix between (D, 4) and (G, 4) xywh float64 boxes."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] d = np.ascontiguousarray(dets, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] g = np.ascontiguousarray(gts, dtype=np.float64)
    cdef Py_ssize_t nd = d.shape[0]
    cdef Py_ssize_t ng = g.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((nd, ng), dtype=np.float64)
    cdef Py_ssize_t i, j
    cdef double dx1, dy1, dx2, dy2, darea
    cdef double ix, iy, iw, ih, inter, union
    for i in range(nd):
        dx1 = d[i, 0]
        dy1 = d[i, 1]
        dx2 = d[i, 0] + d[i, 2]
        dy2 = d[i, 1] + d[i, 3]
        darea = d[i, 2] * d[i, 3]
        for j in range(ng):
            iw = min(dx2, g[j, 0] + g[j, 2]) - max(dx1, g[j, 0])
            ih = min(dy2, g[j, 1] + g[j, 3]) - max(dy1, g[j, 1])
            if iw < 0.0:
                iw = 0.0
            if ih < 0.0:
                ih = 0.0
            inter = iw * ih
            union = darea + g[j, 2] * g[j, 3] - inter
            if union > 0.0:
                out[i, j] = inter / union
    return out


def greedy_match(ious, thresholds, gt_ignore):
    """Greedy score-order matching at each threshold (see _kernels_py)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] m_iou = np.ascontiguousarray(ious, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] thr = np.ascontiguousarray(thresholds, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] gig = np.ascontiguousarray(gt_ignore, dtype=np.uint8)
    cdef Py_ssize_t n_det = m_iou.shape[0]
    cdef Py_ssize_t n_gt = m_iou.shape[1]
    cdef Py_ssize_t n_thr = thr.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=2] det_match = np.full((n_thr, n_det), -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] gt_match = np.full((n_thr, n_gt), -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] det_ignore = np.zeros((n_thr, n_det), dtype=np.uint8)
    cdef Py_ssize_t ti, d, g
    cdef Py_ssize_t m
    cdef double t, best
    for ti in range(n_thr):
        t = thr[ti]
        if t > 1.0 - 1e-10:
            t = 1.0 - 1e-10
        for d in range(n_det):
            best = t
            m = -1
            for g in range(n_gt):
                if gt_match[ti, g] >= 0:
                    continue
                if m >= 0 and gig[m] == 0 and gig[g] == 1:
                    break
                if m_iou[d, g] < best:
                    continue
                best = m_iou[d, g]
                m = g
            if m < 0:
                continue
            det_match[ti, d] = m
            gt_match[ti, m] = d
            det_ignore[ti, d] = gig[m]
    return det_match, gt_match, det_ignore
