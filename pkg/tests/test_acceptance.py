"""Acceptance gate: one test per release criterion.

Each test prints a single [PASS]/[FAIL] line (visible with `pytest -s`)
so the gate can be read as a checklist.  Tolerances are part of the
criterion and must not be loosened.
"""

import json
import time
from contextlib import contextmanager

import numpy as np
import pytest

from detscope import (
    BBox,
    CornerCurve,
    DEFAULT_IOU_THRESHOLDS,
    LevelSetParam,
    PRCurve,
    ProbeSpec,
    average_precision,
    correlate_accuracy_uap,
    diagnose,
    evaluate,
    generate_incongruent_set,
    generate_probe,
    iou,
    level_set_box,
    load_dataset,
    load_detections,
    overlap_product,
    sample_boxes_min_iou,
    uap_strategy1,
)
from detscope.probes import gaussian_kernel1d

from helpers import (
    as_oracle_inputs,
    checkerboard,
    detector_noise_instance,
    gt,
    random_instance,
    separated_dataset,
    simulate_classifier,
)
from oracles import evaluate_brute

ALL_CURVES = (
    CornerCurve.TOP_LEFT,
    CornerCurve.TOP_RIGHT,
    CornerCurve.BOTTOM_RIGHT,
    CornerCurve.BOTTOM_LEFT,
)


@contextmanager
def criterion(n, desc):
    try:
        yield
    except BaseException:
        print(f"[FAIL] criterion {n}: {desc}")
        raise
    print(f"[PASS] criterion {n}: {desc}")


def test_criterion_1_level_set_exactness():
    with criterion(1, "level-set IOU exact to 1e-9 over 10k samples, < 1 s"):
        target = BBox(12.5, 7.25, 30.0, 18.0)
        rng = np.random.default_rng(20260815)
        start = time.perf_counter()
        n_samples = 0
        for gamma in (0.5, 0.75, 0.9):
            c = overlap_product(gamma)
            for curve in ALL_CURVES:
                for alpha in rng.uniform(c, 1.0, size=834):
                    box = level_set_box(target, gamma, curve, float(alpha))
                    assert abs(iou(box, target) - gamma) <= 1e-9
                    n_samples += 1
        assert n_samples >= 10_000
        # product constraint at gamma = 0.5: alpha*beta = 2/3 exactly
        assert abs(overlap_product(0.5) - 2 / 3) <= 1e-12
        for alpha in rng.uniform(overlap_product(0.5), 1.0, size=100):
            p = LevelSetParam.from_alpha(0.5, float(alpha))
            assert abs(p.alpha * p.beta - 2 / 3) <= 1e-12
        # the >= gamma sampler rides the same construction
        for box in sample_boxes_min_iou(target, 0.6, n=50, seed=7):
            assert iou(box, target) >= 0.6 - 1e-9
        elapsed = time.perf_counter() - start
        assert elapsed < 1.0, f"took {elapsed:.2f}s"


def test_criterion_2_uap_iou_invariance():
    with criterion(2, "strategy-1 UAP identical at every IOU threshold (bitwise)"):
        ds = separated_dataset(seed=42, n_images=100, n_categories=10,
                               p_target=0.3125)
        n_boxes = len(ds.annotations)
        assert 400 <= n_boxes <= 600, n_boxes  # "~500 boxes"

        outs = simulate_classifier(ds, accuracy=0.9, seed=43)
        rep = uap_strategy1(ds, outs)
        assert rep.ap50 == rep.ap75 == rep.map
        assert len(set(rep.per_iou.values())) == 1
        assert rep.map < 100.0  # the 10% label noise must show

        perfect = simulate_classifier(ds, accuracy=1.0, seed=44)
        rep100 = uap_strategy1(ds, perfect)
        assert rep100.map == 100.0
        for v in (rep100.ap50, rep100.ap75, rep100.ap_small,
                  rep100.ap_medium, rep100.ap_large):
            assert v is None or v == 100.0
        assert all(v == 100.0 for v in rep100.per_iou.values())
        for c in rep100.per_category:
            for f in ("ap", "ap50", "ap75", "ap_small", "ap_medium", "ap_large"):
                v = getattr(c, f)
                assert v is None or v == 100.0, (c.category_id, f)


def test_criterion_3_diagnosis_monotone_terminal():
    with criterion(3, "diagnosis sequence non-decreasing, ends at 100 +/- 1e-9, "
                      "50 seeds < 10 s"):
        start = time.perf_counter()
        for seed in range(50):
            ds, dets = detector_noise_instance(seed=3000 + seed)
            seq = diagnose(ds, dets).sequence()
            assert len(seq) == 5
            for a, b in zip(seq, seq[1:]):
                assert b >= a, (seed, seq)
            assert abs(seq[-1] - 100.0) <= 1e-9, (seed, seq)
        elapsed = time.perf_counter() - start
        assert elapsed < 10.0, f"took {elapsed:.2f}s"


def test_criterion_4_oracle_equivalence():
    with criterion(4, "evaluator matches brute-force reference to 1e-9 "
                      "on 200 random instances"):
        for seed in range(200):
            ds, dets = random_instance(seed=4000 + seed)
            rep = evaluate(ds, dets, with_size_buckets=False)
            o_gts, o_dets = as_oracle_inputs(ds, dets)
            per_cat, per_t, o_map = evaluate_brute(
                o_gts, o_dets, DEFAULT_IOU_THRESHOLDS
            )
            if o_map is None:
                assert rep.map is None
                continue
            assert rep.map == pytest.approx(100 * o_map, abs=1e-9)
            for t in DEFAULT_IOU_THRESHOLDS:
                assert rep.per_iou[t] == pytest.approx(100 * per_t[t], abs=1e-9)
            by_id = {c.category_id: c for c in rep.per_category}
            for cat, aps in per_cat.items():
                expect = sum(aps.values()) / len(aps)
                assert by_id[cat].ap == pytest.approx(100 * expect, abs=1e-9)


def test_criterion_5_hand_ap_case():
    with criterion(5, "AP([TP .9, FP .8], n_gt=2) == 51/101 exactly"):
        curve = PRCurve(scores=(0.9, 0.8), is_tp=(True, False), n_gt=2)
        assert average_precision(curve) == 51 / 101


def test_criterion_6_reference_fixture(mini_paths):
    with criterion(6, "mini fixture reproduced within 1e-4 on every cell"):
        ann_path, det_path, expected_path = mini_paths
        expected = json.loads(expected_path.read_text())
        ds = load_dataset(ann_path)
        dets = load_detections(det_path, ds)
        got = evaluate(ds, dets).to_dict()

        for key, want in expected["metrics"].items():
            if want is None:
                assert got["metrics"][key] is None, key
            else:
                assert got["metrics"][key] == pytest.approx(want, abs=1e-4), key
        for blk in ("per_iou_ap", "recall_by_iou"):
            for key, want in expected[blk].items():
                if want is None:
                    assert got[blk][key] is None, (blk, key)
                else:
                    assert got[blk][key] == pytest.approx(want, abs=1e-4), (blk, key)
        for c in got["per_category"]:
            want = expected["per_category"][str(c["id"])]
            for f in ("ap", "ap50", "ap75", "ap_small", "ap_medium", "ap_large"):
                if want[f] is None:
                    assert c[f] is None, (c["id"], f)
                else:
                    assert c[f] == pytest.approx(want[f], abs=1e-4), (c["id"], f)


def test_criterion_7_probe_properties():
    with criterion(7, "probe invariants: flip involution, kernel sum, "
                      "crop_resize dims, 900 pastes"):
        image = checkerboard(48, 64)
        anns = [gt(1, 1, 1, 5.5, 8.25, 10, 12), gt(2, 1, 1, 40, 20, 16, 16),
                gt(3, 1, 1, 20, 30, 8, 10)]

        flip = ProbeSpec(variant="vertical_flip")
        once = generate_probe(image, anns, flip)[0]
        assert once.annotations[0].bbox.as_xywh() == (5.5, 48 - 8.25 - 12, 10, 12)
        twice = generate_probe(once.pixels, list(once.annotations), flip)[0]
        assert np.array_equal(twice.pixels, image)
        assert [a.bbox.as_xywh() for a in twice.annotations] == \
               [a.bbox.as_xywh() for a in anns]

        assert abs(gaussian_kernel1d(11, 2.0).sum() - 1.0) <= 1e-12

        resized = generate_probe(image, anns, ProbeSpec(variant="crop_resize",
                                                        min_dim=300))
        for out in resized:
            oh, ow = out.pixels.shape[:2]
            assert min(oh, ow) == 300
        # aspect preserved to one pixel of rounding on the long side
        src = generate_probe(image, anns, ProbeSpec(variant="crop"))
        for patch, out in zip(src, resized):
            ph, pw = patch.pixels.shape[:2]
            oh, ow = out.pixels.shape[:2]
            assert abs(max(ow, oh) / min(ow, oh) - max(pw, ph) / min(pw, ph)) \
                <= 1 / 300

        whites = generate_probe(image, anns, ProbeSpec(variant="white_bg"))
        assert len(whites) == len(anns)
        assert all(len(w.annotations) == 1 for w in whites)

        objects = [(checkerboard(6 + i % 3, 8, seed=i), 1 + i % 3, i + 1)
                   for i in range(9)]
        backgrounds = [(checkerboard(32, 32, seed=100 + j), f"bg{j:03d}.png")
                       for j in range(100)]
        pastes = generate_incongruent_set(objects, backgrounds, seed=9)
        assert len(pastes) == 900
        assert len({p.tag for p in pastes}) == 900
        assert all(len(p.annotations) == 1 for p in pastes)


def test_criterion_8_correlation():
    with criterion(8, "correlation: exact line R2=1; hand case slope 0.5, "
                      "R2 0.75 within 1e-12"):
        line = correlate_accuracy_uap([(0.0, 1.0), (1.0, 3.0), (2.0, 5.0),
                                       (3.0, 7.0)])
        assert abs(line.r2 - 1.0) <= 1e-12
        assert abs(line.slope - 2.0) <= 1e-12

        hand = correlate_accuracy_uap([(0, 0), (1, 1), (2, 1)])
        assert abs(hand.slope - 0.5) <= 1e-12
        assert abs(hand.r2 - 0.75) <= 1e-12
        assert abs(hand.intercept - 1 / 6) <= 1e-12
