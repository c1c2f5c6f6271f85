"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np

from detscope import (
    BBox,
    Category,
    Dataset,
    Detection,
    EvalConfig,
    GroundTruth,
    ImageInfo,
    size_bucket,
)

DEFAULT_CFG = EvalConfig()


def gt(ann_id, image_id, category_id, x, y, w, h, cfg=DEFAULT_CFG):
    area = w * h
    return GroundTruth(
        id=ann_id,
        image_id=image_id,
        category_id=category_id,
        bbox=BBox(x, y, w, h),
        area=area,
        size_class=size_bucket(area, cfg),
    )


def det(image_id, category_id, x, y, w, h, score):
    return Detection(
        image_id=image_id,
        category_id=category_id,
        bbox=BBox(x, y, w, h),
        score=score,
    )


def build_dataset(annotations, n_images=None, n_categories=None, size=(640, 480)):
    imgs = {a.image_id for a in annotations}
    cats = {a.category_id for a in annotations}
    if n_images is not None:
        imgs |= set(range(1, n_images + 1))
    if n_categories is not None:
        cats |= set(range(1, n_categories + 1))
    return Dataset(
        images=[ImageInfo(i, size[0], size[1]) for i in sorted(imgs)],
        categories=[Category(c, f"cat{c}") for c in sorted(cats)],
        annotations=list(annotations),
    )


def random_instance(seed, max_images=3, max_categories=3, max_targets=5,
                    max_dets=10, field=120.0):
    """Small random (dataset, detections) pair for oracle comparisons."""
    rng = np.random.default_rng(seed)
    n_img = int(rng.integers(1, max_images + 1))
    n_cat = int(rng.integers(1, max_categories + 1))
    n_gt = int(rng.integers(1, max_targets + 1))
    n_det = int(rng.integers(0, max_dets + 1))

    anns = []
    for i in range(n_gt):
        w = float(rng.uniform(4, 40))
        h = float(rng.uniform(4, 40))
        x = float(rng.uniform(0, field - w))
        y = float(rng.uniform(0, field - h))
        anns.append(gt(i + 1, int(rng.integers(1, n_img + 1)),
                       int(rng.integers(1, n_cat + 1)), x, y, w, h))
    ds = build_dataset(anns, n_images=n_img, n_categories=n_cat,
                       size=(int(field), int(field)))

    dets = []
    for _ in range(n_det):
        if anns and rng.random() < 0.7:
            base = anns[int(rng.integers(0, len(anns)))]
            dx, dy = rng.uniform(-8, 8, size=2)
            x = min(max(base.bbox.x + float(dx), 0.0), field - 1)
            y = min(max(base.bbox.y + float(dy), 0.0), field - 1)
            w = max(1.0, base.bbox.w * float(rng.uniform(0.7, 1.3)))
            h = max(1.0, base.bbox.h * float(rng.uniform(0.7, 1.3)))
            img = base.image_id
            cat = (base.category_id if rng.random() < 0.8
                   else int(rng.integers(1, n_cat + 1)))
        else:
            w = float(rng.uniform(4, 40))
            h = float(rng.uniform(4, 40))
            x = float(rng.uniform(0, field - w))
            y = float(rng.uniform(0, field - h))
            img = int(rng.integers(1, n_img + 1))
            cat = int(rng.integers(1, n_cat + 1))
        dets.append(det(img, cat, x, y, min(w, field - x), min(h, field - y),
                        float(rng.uniform(0.05, 1.0))))
    return ds, dets


def _shifted(box, g, axis, sign, image_id, category_id, score):
    """Same-size box shifted along one axis to IOU exactly (1-d)/(1+d)."""
    x, y, w, h = box.as_xywh()
    if axis == 0:
        dx = w * (1.0 - g) / (1.0 + g)
        return det(image_id, category_id, x + sign * dx, y, w, h, score)
    dy = h * (1.0 - g) / (1.0 + g)
    return det(image_id, category_id, x, y + sign * dy, w, h, score)


def detector_noise_instance(seed, n_images=6, n_categories=3):
    """Detector-like noisy detections over well-separated targets.

    Produces every diagnosis error type: background false positives,
    duplicates strictly looser than their primary hit, mislocalized
    boxes (either on otherwise-missed targets or outscoring the primary)
    and outright misses.  Targets sit on a coarse grid with wide margins
    so a detection never overlaps two targets at once.
    """
    rng = np.random.default_rng(seed)
    cell, margin, grid = 200.0, 50.0, 4
    field = cell * grid
    p_target = rng.uniform(0.25, 0.6)
    p_miss = rng.uniform(0.1, 0.45)
    p_dup = rng.uniform(0.15, 0.5)

    anns = []
    dets = []
    ann_id = 1
    for img in range(1, n_images + 1):
        cells = [(r, c) for r in range(grid) for c in range(grid)]
        for r, c in cells:
            if rng.random() >= p_target:
                continue
            w = float(rng.uniform(24, 64))
            h = float(rng.uniform(24, 64))
            x = c * cell + float(rng.uniform(margin, cell - margin - w))
            y = r * cell + float(rng.uniform(margin, cell - margin - h))
            cat = int(rng.integers(1, n_categories + 1))
            target = gt(ann_id, img, cat, x, y, w, h)
            anns.append(target)
            ann_id += 1

            def jitter(g, score):
                axis = int(rng.integers(0, 2))
                sign = 1 if rng.random() < 0.5 else -1
                dets.append(_shifted(target.bbox, g, axis, sign, img, cat, score))

            if rng.random() < p_miss:
                # missed target; sometimes with only a mislocalized box
                if rng.random() < 0.5:
                    jitter(float(rng.uniform(0.15, 0.42)), float(rng.uniform(0.2, 0.6)))
                continue
            q = float(rng.uniform(0.55, 0.97))
            s = float(rng.uniform(0.55, 0.95))
            jitter(q, s)
            if rng.random() < p_dup and q - 0.04 > 0.52:
                jitter(float(rng.uniform(0.52, q - 0.04)), s * float(rng.uniform(0.7, 0.95)))
            if rng.random() < 0.15:
                # a loose box that outscores the primary hit
                jitter(float(rng.uniform(0.15, 0.42)),
                       min(0.99, s + float(rng.uniform(0.02, 0.04))))
        # background clutter in empty cells
        taken = {(int(a.bbox.y // cell), int(a.bbox.x // cell))
                 for a in anns if a.image_id == img}
        free = [rc for rc in cells if rc not in taken]
        rng.shuffle(free)
        for r, c in free[: int(rng.integers(0, 4))]:
            w = float(rng.uniform(20, 60))
            h = float(rng.uniform(20, 60))
            x = c * cell + float(rng.uniform(margin, cell - margin - w))
            y = r * cell + float(rng.uniform(margin, cell - margin - h))
            dets.append(det(img, int(rng.integers(1, n_categories + 1)),
                            x, y, w, h, float(rng.uniform(0.05, 0.5))))

    if not anns:  # ensure the dataset is never degenerate
        anns.append(gt(1, 1, 1, 100, 100, 40, 40))
    ds = build_dataset(anns, n_images=n_images, n_categories=n_categories,
                       size=(int(field), int(field)))
    return ds, dets


def as_oracle_inputs(ds, dets):
    o_gts = [(a.image_id, a.category_id, a.bbox.as_xywh()) for a in ds.annotations]
    o_dets = [(d.image_id, d.category_id, d.bbox.as_xywh(), d.score) for d in dets]
    return o_gts, o_dets


def separated_dataset(seed, n_images=10, n_categories=4, p_target=0.5,
                      cell=200.0, grid=4):
    """Targets on a coarse grid, never overlapping each other."""
    rng = np.random.default_rng(seed)
    anns = []
    ann_id = 1
    for img in range(1, n_images + 1):
        for r in range(grid):
            for c in range(grid):
                if rng.random() >= p_target:
                    continue
                w = float(rng.uniform(16, 90))
                h = float(rng.uniform(16, 90))
                x = c * cell + float(rng.uniform(5, cell - 5 - w))
                y = r * cell + float(rng.uniform(5, cell - 5 - h))
                anns.append(gt(ann_id, img, int(rng.integers(1, n_categories + 1)),
                               x, y, w, h))
                ann_id += 1
    return build_dataset(anns, n_images=n_images, n_categories=n_categories,
                         size=(int(cell * grid), int(cell * grid)))


def simulate_classifier(ds, accuracy, seed, n_categories=None):
    """Per-annotation predictions, correct with the given probability."""
    from detscope import ClassifierOutput

    rng = np.random.default_rng(seed)
    cats = list(ds.category_ids) if n_categories is None else list(range(1, n_categories + 1))
    outs = []
    for a in ds.annotations:
        if rng.random() < accuracy:
            label = a.category_id
        else:
            wrong = [c for c in cats if c != a.category_id]
            label = int(wrong[int(rng.integers(0, len(wrong)))])
        outs.append(ClassifierOutput(a.id, label, float(rng.uniform(0.5, 1.0))))
    return outs


def checkerboard(h, w, channels=3, seed=None):
    """Deterministic uint8 test image with distinguishable pixels."""
    if seed is None:
        yy, xx = np.mgrid[0:h, 0:w]
        base = ((yy * 7 + xx * 13) % 251).astype(np.uint8)
        if channels == 1:
            return base
        return np.stack([base, (base + 37) % 251, (base + 91) % 251], axis=-1)
    rng = np.random.default_rng(seed)
    shape = (h, w) if channels == 1 else (h, w, channels)
    return rng.integers(0, 256, size=shape, dtype=np.uint8)
