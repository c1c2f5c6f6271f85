"""Compare the compiled matching kernels against the numpy fallback.

Times pairwise_iou and greedy_match on random boxes at a few sizes and
checks that both backends agree bitwise.  Run from the repo root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --sizes 200,1000 --repeats 5
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from detscope import _kernels_py

try:
    from detscope import _kernels
except ImportError:
    _kernels = None

THRESHOLDS = np.linspace(0.5, 0.95, 10)


def random_boxes(rng, n, field=1000.0):
    xy = rng.uniform(0, field - 100, size=(n, 2))
    wh = rng.uniform(4, 100, size=(n, 2))
    return np.ascontiguousarray(np.hstack([xy, wh]))


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_size(n_dets, n_gts, repeats, rng):
    dets = random_boxes(rng, n_dets)
    gts = random_boxes(rng, n_gts)
    ignore = np.zeros(n_gts, dtype=np.uint8)

    rows = []
    t_py, iou_py = best_of(lambda: _kernels_py.pairwise_iou(dets, gts), repeats)
    entry = {"op": f"pairwise_iou {n_dets}x{n_gts}", "python": t_py}
    if _kernels is not None:
        t_c, iou_c = best_of(lambda: _kernels.pairwise_iou(dets, gts), repeats)
        if not np.array_equal(iou_py, iou_c):
            raise AssertionError("pairwise_iou backends disagree")
        entry["compiled"] = t_c
    rows.append(entry)

    t_py, match_py = best_of(
        lambda: _kernels_py.greedy_match(iou_py, THRESHOLDS, ignore), repeats
    )
    entry = {"op": f"greedy_match {n_dets}x{n_gts}x10", "python": t_py}
    if _kernels is not None:
        t_c, match_c = best_of(
            lambda: _kernels.greedy_match(iou_py, THRESHOLDS, ignore), repeats
        )
        for a, b in zip(match_py, match_c):
            if not np.array_equal(a, b):
                raise AssertionError("greedy_match backends disagree")
        entry["compiled"] = t_c
    rows.append(entry)
    return rows


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="100,500,2000",
                        help="comma-separated detection counts")
    parser.add_argument("--gts", type=int, default=None,
                        help="targets per size (default: half the detections)")
    parser.add_argument("--repeats", type=int, default=7)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if _kernels is None:
        print("compiled extension not available; timing the fallback only\n")

    rng = np.random.default_rng(args.seed)
    rows = []
    for n in (int(s) for s in args.sizes.split(",")):
        n_gts = args.gts if args.gts is not None else max(1, n // 2)
        rows.extend(bench_size(n, n_gts, args.repeats, rng))

    width = max(len(r["op"]) for r in rows)
    header = f"{'op':<{width}}  {'python':>10}"
    if _kernels is not None:
        header += f"  {'compiled':>10}  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for r in rows:
        line = f"{r['op']:<{width}}  {r['python'] * 1e3:>8.3f}ms"
        if "compiled" in r:
            line += f"  {r['compiled'] * 1e3:>8.3f}ms  {r['python'] / r['compiled']:>7.1f}x"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
