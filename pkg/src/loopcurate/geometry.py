"""Exact circle geometry: intersection areas and IoU.

All coordinates are level-0 pixels, real valued. The circle/circle
intersection uses the closed-form two-segment lens area, with an explicit
containment branch because the segment formula degenerates (acos of ~1,
cancellation) when one circle swallows the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ValidationError

# Tolerance on the containment predicate d <= |r_a - r_b|; inside this band
# the segment formula is numerically unstable, so the containment branch wins.
CONTAINMENT_EPS = 1e-12


@dataclass(frozen=True)
class Circle:
    """A circle in level-0 slide coordinates, radius in pixels."""

    cx: float
    cy: float
    r: float

    def __post_init__(self):
        if not (math.isfinite(self.cx) and math.isfinite(self.cy)):
            raise ValidationError(f"circle center must be finite, got ({self.cx}, {self.cy})")
        if not (math.isfinite(self.r) and self.r > 0):
            raise ValidationError(f"circle radius must be finite and > 0, got {self.r}")

    @property
    def area(self) -> float:
        return math.pi * self.r * self.r

    @property
    def box_area(self) -> float:
        """Area of the axis-aligned bounding square."""
        return (2.0 * self.r) ** 2

    def bounds(self) -> tuple[float, float, float, float]:
        """Bounding square as (x0, y0, x1, y1)."""
        return (self.cx - self.r, self.cy - self.r, self.cx + self.r, self.cy + self.r)


def circle_intersection_area(a: Circle, b: Circle) -> float:
    """Area of the intersection of two circles (lens formula).

    Arguments are canonically ordered first so the result is bit-exact
    symmetric despite the asymmetric radical-line split below.
    """
    if (b.r, b.cx, b.cy) < (a.r, a.cx, a.cy):
        a, b = b, a
    d = math.hypot(a.cx - b.cx, a.cy - b.cy)
    if d >= a.r + b.r:
        return 0.0
    if d <= abs(a.r - b.r) + CONTAINMENT_EPS:
        rmin = min(a.r, b.r)
        return math.pi * rmin * rmin
    # Each segment: r^2 * acos(d_i / r) - d_i * sqrt(r^2 - d_i^2), where d_i is
    # the signed distance from each center to the radical line.
    d1 = (a.r * a.r - b.r * b.r + d * d) / (2.0 * d)
    d2 = d - d1
    seg_a = a.r * a.r * math.acos(_clamp(d1 / a.r)) - d1 * math.sqrt(max(a.r * a.r - d1 * d1, 0.0))
    seg_b = b.r * b.r * math.acos(_clamp(d2 / b.r)) - d2 * math.sqrt(max(b.r * b.r - d2 * d2, 0.0))
    return seg_a + seg_b


def circle_iou(a: Circle, b: Circle) -> float:
    """Intersection over union of two circle areas, in [0, 1]."""
    inter = circle_intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    union = a.area + b.area - inter
    return min(inter / union, 1.0)


def box_iou(a: Circle, b: Circle) -> float:
    """IoU of the axis-aligned bounding squares [cx-r, cx+r] x [cy-r, cy+r]."""
    ax0, ay0, ax1, ay1 = a.bounds()
    bx0, by0, bx1, by1 = b.bounds()
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.box_area + b.box_area - inter
    return min(inter / union, 1.0)


def _clamp(x: float) -> float:
    return max(-1.0, min(1.0, x))
