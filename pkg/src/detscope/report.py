"""Deterministic JSON/CSV report emission.

Floats are rendered with 6 significant digits; identical inputs always
produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

from .diagnose import STAGE_ORDER, DiagnosisReport
from .evaluate import EvalReport
from .upperbound import Correlation

# column names follow the published table exactly
DIAGNOSIS_COLUMNS = ("mAP", "- Cls. (Type I)", "+ Local.", "- Duplicates", "+ Misses")


def _round6(value):
    if isinstance(value, float):
        return float(format(value, ".6g"))
    if isinstance(value, dict):
        return {k: _round6(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round6(v) for v in value]
    return value


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".6g")
    return str(value)


def write_json(obj: dict, path) -> None:
    Path(path).write_text(
        json.dumps(_round6(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def write_eval_json(report: EvalReport, path) -> None:
    write_json(report.to_dict(), path)


def write_eval_csv(report: EvalReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        cols = ("ap", "ap50", "ap75", "ap_small", "ap_medium", "ap_large")
        w.writerow(("category_id", "name", "n_gt") + cols)
        for c in report.per_category:
            w.writerow(
                [c.category_id, c.name, c.n_gt]
                + [_fmt(getattr(c, col)) for col in cols]
            )
        w.writerow(
            ["all", "", report.n_annotations]
            + [
                _fmt(v)
                for v in (
                    report.map,
                    report.ap50,
                    report.ap75,
                    report.ap_small,
                    report.ap_medium,
                    report.ap_large,
                )
            ]
        )


def write_pr_curves(report: EvalReport, path) -> None:
    if not report.curves:
        raise ValueError(
            "report carries no PR curves; evaluate with collect_curves=True"
        )
    doc = {
        "interpolation": report.interpolation,
        "curves": [
            {
                "category_id": cat,
                "iou_threshold": thr,
                "recall": curve["recall"],
                "precision": curve["precision"],
                "scores": curve["scores"],
            }
            for (cat, thr), curve in sorted(report.curves.items())
        ],
    }
    write_json(doc, path)


def diagnosis_row(report: DiagnosisReport) -> dict[str, float | None]:
    seq = report.sequence()
    return dict(zip(DIAGNOSIS_COLUMNS, seq))


def write_diagnosis_json(report: DiagnosisReport, path) -> None:
    doc = report.to_dict()
    doc["table"] = {"columns": list(DIAGNOSIS_COLUMNS), "row": list(report.sequence())}
    write_json(doc, path)


def write_diagnosis_csv(report: DiagnosisReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(DIAGNOSIS_COLUMNS)
        w.writerow([_fmt(v) for v in report.sequence()])


def write_correlation_json(corr: Correlation, path) -> None:
    write_json(
        {"slope": corr.slope, "intercept": corr.intercept, "r2": corr.r2, "n": corr.n},
        path,
    )


def format_boxes(boxes: Sequence) -> str:
    lines = []
    for b in boxes:
        lines.append(",".join(format(v, ".6g") for v in b.as_xywh()))
    return "\n".join(lines) + ("\n" if lines else "")
