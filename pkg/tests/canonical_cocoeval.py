"""Test-side transcription of the canonical COCO bbox evaluation algorithm.

Used as the independent reference for the committed mini fixture: the
per-image matching (evaluateImg) and the accumulate step are reproduced
verbatim from the reference implementation, minus crowd/segmentation
handling, which the toolkit does not model.  Kept free of any detscope
imports on purpose.
"""

from __future__ import annotations

import numpy as np

IOU_THRS = np.linspace(
    0.5, 0.95, int(np.round((0.95 - 0.5) / 0.05)) + 1, endpoint=True
)
REC_THRS = np.linspace(0.0, 1.00, int(np.round((1.00 - 0.0) / 0.01)) + 1, endpoint=True)
AREA_RNGS = {
    "all": (0.0, 1e10),
    "small": (0.0, 32.0**2),
    "medium": (32.0**2, 96.0**2),
    "large": (96.0**2, 1e10),
}
AREA_ORDER = ("all", "small", "medium", "large")


def _iou_matrix(dts, gts):
    out = np.zeros((len(dts), len(gts)))
    for i, d in enumerate(dts):
        dx, dy, dw, dh = d["bbox"]
        for j, g in enumerate(gts):
            gx, gy, gw, gh = g["bbox"]
            iw = min(dx + dw, gx + gw) - max(dx, gx)
            ih = min(dy + dh, gy + gh) - max(dy, gy)
            if iw <= 0 or ih <= 0:
                continue
            inter = iw * ih
            union = dw * dh + gw * gh - inter
            out[i, j] = inter / union
    return out


def _evaluate_img(gt, dt, ious, a_rng, max_det):
    if len(gt) == 0 and len(dt) == 0:
        return None
    for g in gt:
        g["_ignore"] = 1 if (g["area"] < a_rng[0] or g["area"] > a_rng[1]) else 0
    gtind = np.argsort([g["_ignore"] for g in gt], kind="mergesort")
    gt = [gt[i] for i in gtind]
    dtind = np.argsort([-d["score"] for d in dt], kind="mergesort")
    dt = [dt[i] for i in dtind[0:max_det]]
    ious = ious[:, gtind] if len(ious) > 0 else ious

    T = len(IOU_THRS)
    G = len(gt)
    D = len(dt)
    gtm = np.zeros((T, G))
    dtm = np.zeros((T, D))
    gt_ig = np.array([g["_ignore"] for g in gt])
    dt_ig = np.zeros((T, D))
    if len(gt) and len(dt):
        for tind, t in enumerate(IOU_THRS):
            for dind, d in enumerate(dt):
                iou = min([t, 1 - 1e-10])
                m = -1
                for gind, g in enumerate(gt):
                    if gtm[tind, gind] > 0:
                        continue
                    if m > -1 and gt_ig[m] == 0 and gt_ig[gind] == 1:
                        break
                    if ious[dind, gind] < iou:
                        continue
                    iou = ious[dind, gind]
                    m = gind
                if m == -1:
                    continue
                dt_ig[tind, dind] = gt_ig[m]
                dtm[tind, dind] = gt[m]["id"]
                gtm[tind, m] = d["id"]
    a = np.array(
        [d["area"] < a_rng[0] or d["area"] > a_rng[1] for d in dt]
    ).reshape((1, D))
    dt_ig = np.logical_or(dt_ig, np.logical_and(dtm == 0, np.repeat(a, T, 0)))
    return {
        "dtMatches": dtm,
        "dtScores": [d["score"] for d in dt],
        "gtIgnore": gt_ig,
        "dtIgnore": dt_ig,
    }


def evaluate_canonical(dataset: dict, detections: list, max_det: int = 100) -> dict:
    """Full canonical evaluation; returns aggregate and per-category cells x100.

    dataset is parsed COCO-style instances JSON; detections a COCO
    results list.  Undefined cells (no targets) are None.
    """
    img_ids = [im["id"] for im in dataset["images"]]
    cat_ids = [c["id"] for c in dataset["categories"]]
    gts: dict = {(i, c): [] for i in img_ids for c in cat_ids}
    for ann in dataset["annotations"]:
        g = dict(ann)
        g.setdefault("area", g["bbox"][2] * g["bbox"][3])
        gts[(g["image_id"], g["category_id"])].append(g)
    dts: dict = {(i, c): [] for i in img_ids for c in cat_ids}
    for i, det in enumerate(detections):
        d = dict(det)
        d["id"] = i + 1
        d["area"] = d["bbox"][2] * d["bbox"][3]
        dts[(d["image_id"], d["category_id"])].append(d)

    ious = {}
    for key in gts:
        dt = sorted(dts[key], key=lambda d: -d["score"])[0:max_det]
        ious[key] = _iou_matrix(dt, gts[key])

    T = len(IOU_THRS)
    R = len(REC_THRS)
    K = len(cat_ids)
    A = len(AREA_ORDER)
    precision = -np.ones((T, R, K, A))
    recall = -np.ones((T, K, A))
    for k, cat in enumerate(cat_ids):
        for a, area in enumerate(AREA_ORDER):
            evals = []
            for img in img_ids:
                # deep-ish copies: _evaluate_img mutates gt dicts and sorts
                gt = [dict(g) for g in gts[(img, cat)]]
                dt = sorted(
                    (dict(d) for d in dts[(img, cat)]), key=lambda d: -d["score"]
                )[0:max_det]
                e = _evaluate_img(gt, dt, ious[(img, cat)], AREA_RNGS[area], max_det)
                if e is not None:
                    evals.append(e)
            if not evals:
                continue
            dt_scores = np.concatenate([e["dtScores"] for e in evals])
            inds = np.argsort(-dt_scores, kind="mergesort")
            dtm = np.concatenate([e["dtMatches"] for e in evals], axis=1)[:, inds]
            dt_ig = np.concatenate([e["dtIgnore"] for e in evals], axis=1)[:, inds]
            gt_ig = np.concatenate([e["gtIgnore"] for e in evals])
            npig = np.count_nonzero(gt_ig == 0)
            if npig == 0:
                continue
            tps = np.logical_and(dtm, np.logical_not(dt_ig))
            fps = np.logical_and(np.logical_not(dtm), np.logical_not(dt_ig))
            tp_sum = np.cumsum(tps, axis=1).astype(dtype=float)
            fp_sum = np.cumsum(fps, axis=1).astype(dtype=float)
            for t, (tp, fp) in enumerate(zip(tp_sum, fp_sum)):
                nd = len(tp)
                rc = tp / npig
                pr = tp / (fp + tp + np.spacing(1))
                q = np.zeros((R,))
                recall[t, k, a] = rc[-1] if nd else 0
                pr = pr.tolist()
                q = q.tolist()
                for i in range(nd - 1, 0, -1):
                    if pr[i] > pr[i - 1]:
                        pr[i - 1] = pr[i]
                srch = np.searchsorted(rc, REC_THRS, side="left")
                try:
                    for ri, pi in enumerate(srch):
                        q[ri] = pr[pi]
                except IndexError:
                    pass
                precision[t, :, k, a] = np.array(q)

    def _mean(s):
        vals = s[s > -1]
        return float(np.mean(vals)) * 100.0 if vals.size else None

    i50 = int(np.argmin(np.abs(IOU_THRS - 0.5)))
    i75 = int(np.argmin(np.abs(IOU_THRS - 0.75)))
    a_idx = {name: i for i, name in enumerate(AREA_ORDER)}
    per_category = {}
    for k, cat in enumerate(cat_ids):
        per_category[cat] = {
            "ap": _mean(precision[:, :, k, a_idx["all"]]),
            "ap50": _mean(precision[i50, :, k, a_idx["all"]]),
            "ap75": _mean(precision[i75, :, k, a_idx["all"]]),
            "ap_small": _mean(precision[:, :, k, a_idx["small"]]),
            "ap_medium": _mean(precision[:, :, k, a_idx["medium"]]),
            "ap_large": _mean(precision[:, :, k, a_idx["large"]]),
        }
    per_iou = {}
    recall_by_iou = {}
    for t in range(T):
        per_iou[format(IOU_THRS[t], ".6g")] = _mean(precision[t, :, :, a_idx["all"]])
        rvals = recall[t, :, a_idx["all"]]
        rvals = rvals[rvals > -1]
        recall_by_iou[format(IOU_THRS[t], ".6g")] = (
            float(np.mean(rvals)) * 100.0 if rvals.size else None
        )
    return {
        "metrics": {
            "mAP": _mean(precision[:, :, :, a_idx["all"]]),
            "AP50": _mean(precision[i50, :, :, a_idx["all"]]),
            "AP75": _mean(precision[i75, :, :, a_idx["all"]]),
            "AP_small": _mean(precision[:, :, :, a_idx["small"]]),
            "AP_medium": _mean(precision[:, :, :, a_idx["medium"]]),
            "AP_large": _mean(precision[:, :, :, a_idx["large"]]),
        },
        "per_category": per_category,
        "per_iou_ap": per_iou,
        "recall_by_iou": recall_by_iou,
    }
