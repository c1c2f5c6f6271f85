"""Axis-aligned box arithmetic and equal-IOU box construction.

Boxes use (x, y, w, h) with the origin at the top-left corner and y
growing downward.  The level-set constructor builds, for a target box
and a requested IOU value gamma, boxes of the *same size* as the target
whose IOU with it is exactly gamma; the sampler draws such boxes at
IOU >= gamma for augmentation-style use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

# alpha*beta must satisfy this product for an equal-size box at IOU gamma;
# tighter than float noise, looser than nothing.
_PRODUCT_TOL = 1e-12


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, strictly positive extent."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"degenerate box: w={self.w}, h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def as_xywh(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    if union <= 0:
        return 0.0
    return inter / union


def scale_box(box: BBox, s: float, bounds: tuple[float, float]) -> BBox:
    """Scale a box about its center by s, clipping to (width, height) bounds.

    s = 1 with the box fully inside bounds is the exact identity.  A box
    clipped to nothing raises ValueError ("degenerate crop").
    """
    if s <= 0:
        raise ValueError(f"scale must be positive, got {s}")
    width, height = bounds
    nw = s * box.w
    nh = s * box.h
    nx = box.x - (nw - box.w) / 2.0
    ny = box.y - (nh - box.h) / 2.0
    if nx >= 0 and ny >= 0 and nx + nw <= width and ny + nh <= height:
        return BBox(nx, ny, nw, nh)
    cx0 = max(0.0, nx)
    cy0 = max(0.0, ny)
    cx1 = min(float(width), nx + nw)
    cy1 = min(float(height), ny + nh)
    if cx1 - cx0 <= 0 or cy1 - cy0 <= 0:
        raise ValueError("degenerate crop: box scaled/clipped to empty")
    return BBox(cx0, cy0, cx1 - cx0, cy1 - cy0)


class CornerCurve(Enum):
    """The four one-parameter families of equal-IOU boxes.

    Each family overlaps the target at one of its corners: a TOP_LEFT
    box sits up-and-left of the target so the two boxes share the
    target's top-left corner region, and so on clockwise.
    """

    TOP_LEFT = "top_left"
    TOP_RIGHT = "top_right"
    BOTTOM_RIGHT = "bottom_right"
    BOTTOM_LEFT = "bottom_left"


_CURVES = (
    CornerCurve.TOP_LEFT,
    CornerCurve.TOP_RIGHT,
    CornerCurve.BOTTOM_RIGHT,
    CornerCurve.BOTTOM_LEFT,
)


def overlap_product(gamma: float) -> float:
    """Required alpha*beta so an equal-size box hits IOU gamma.

    With overlap fractions alpha, beta of the target's width/height, the
    intersection is alpha*beta*area and the union (2 - alpha*beta)*area,
    so IOU = gamma forces alpha*beta = 2*gamma / (1 + gamma).
    """
    if not (0.0 < gamma <= 1.0):
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    return 2.0 * gamma / (1.0 + gamma)


@dataclass(frozen=True)
class LevelSetParam:
    """Validated (gamma, alpha, beta) triple for one equal-IOU family."""

    gamma: float
    alpha: float
    beta: float

    def __post_init__(self):
        c = overlap_product(self.gamma)
        if not (c - _PRODUCT_TOL <= self.alpha <= 1.0 + _PRODUCT_TOL):
            raise ValueError(
                f"alpha={self.alpha} outside admissible range [{c}, 1] for gamma={self.gamma}"
            )
        if abs(self.alpha * self.beta - c) > _PRODUCT_TOL:
            raise ValueError(
                f"alpha*beta={self.alpha * self.beta} does not match required product {c}"
            )

    @classmethod
    def from_alpha(cls, gamma: float, alpha: float) -> "LevelSetParam":
        c = overlap_product(gamma)
        if not (c - _PRODUCT_TOL <= alpha <= 1.0 + _PRODUCT_TOL):
            raise ValueError(
                f"alpha={alpha} outside admissible range [{c}, 1] for gamma={gamma}"
            )
        return cls(gamma, alpha, c / alpha)

    @property
    def symmetric_alpha(self) -> float:
        # the alpha = beta point of the family
        return math.sqrt(overlap_product(self.gamma))


def level_set_box(target: BBox, gamma: float, curve: CornerCurve, alpha: float) -> BBox:
    """Box of the target's size with IOU exactly gamma, on the given corner family.

    alpha is the overlapped fraction of the target's width and must lie
    in [2*gamma/(1+gamma), 1]; the height fraction beta follows from the
    product constraint.  gamma = 1 (forcing alpha = 1) returns the
    target itself.
    """
    p = LevelSetParam.from_alpha(gamma, alpha)
    a, b = p.alpha, p.beta
    u, v = target.w, target.h
    if curve is CornerCurve.TOP_LEFT:
        dx, dy = (a - 1.0) * u, (b - 1.0) * v
    elif curve is CornerCurve.TOP_RIGHT:
        dx, dy = (1.0 - a) * u, (b - 1.0) * v
    elif curve is CornerCurve.BOTTOM_RIGHT:
        dx, dy = (1.0 - a) * u, (1.0 - b) * v
    elif curve is CornerCurve.BOTTOM_LEFT:
        dx, dy = (a - 1.0) * u, (1.0 - b) * v
    else:  # pragma: no cover
        raise ValueError(f"unknown curve {curve!r}")
    return BBox(target.x + dx, target.y + dy, u, v)


def sample_boxes_min_iou(
    target: BBox, gamma: float, n: int = 4, seed: int | None = 0
) -> list[BBox]:
    """Draw n same-size boxes with IOU(target, box) >= gamma.

    Each draw picks gamma' ~ U[gamma, 1], a corner family uniformly, and
    alpha uniformly over its admissible range.  Deterministic for a
    fixed seed; no clipping is applied, so samples may leave the image.
    """
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if not (0.0 < gamma <= 1.0):
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        g = rng.uniform(gamma, 1.0)
        curve = _CURVES[int(rng.integers(0, 4))]
        c = overlap_product(g)
        alpha = rng.uniform(c, 1.0)
        out.append(level_set_box(target, g, curve, alpha))
    return out
