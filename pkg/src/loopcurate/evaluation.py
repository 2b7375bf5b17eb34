"""Detection evaluation: greedy IoU matching, PR curves and the COCO-style AP
family (AP, AP50, AP75, AP by object size).

Conventions (COCO, adopted because the reported metric columns follow it):
IoU grid 0.50:0.05:0.95, 101-point interpolated AP, size buckets split at
32^2 and 96^2 px^2 of object area at level-0 scale. Matching is greedy by
descending score; ties break by ascending id (detections) and ascending id
(ground truths) for full determinism.

Size-bucket APs use ignore semantics: ground truths outside the bucket are
ignored (matching prefers unignored), unmatched detections whose own area
falls outside the bucket are ignored rather than counted as false positives.
For the all-areas range nothing is ignored and matching reduces to plain
match_detections.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .errors import DomainError, ValidationError
from .geometry import box_iou, circle_iou
from .model import CircleAnnotation

IOU_GRID = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = 101

AREA_SMALL_MAX = 32.0**2
AREA_MEDIUM_MAX = 96.0**2

_ALL_AREAS = (0.0, math.inf)
_BUCKETS = {
    "small": (0.0, AREA_SMALL_MAX),
    "medium": (AREA_SMALL_MAX, AREA_MEDIUM_MAX),
    "large": (AREA_MEDIUM_MAX, math.inf),
}


class GeometryMode(enum.Enum):
    CIRCLE = "CIRCLE"
    BOX = "BOX"


def pair_iou(a: CircleAnnotation, b: CircleAnnotation, mode: GeometryMode) -> float:
    fn = circle_iou if mode is GeometryMode.CIRCLE else box_iou
    return fn(a.geometry, b.geometry)


def object_area(a: CircleAnnotation, mode: GeometryMode) -> float:
    return a.geometry.area if mode is GeometryMode.CIRCLE else a.geometry.box_area


def ranking_score(a: CircleAnnotation) -> float:
    """Detections without a score (human-confirmed objects) rank highest."""
    return 1.0 if a.score is None else a.score


@dataclass(frozen=True)
class MatchCounts:
    tp: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValidationError(f"match counts must be non-negative: {self}")


@dataclass(frozen=True)
class MatchPair:
    detection_id: int
    ground_truth_id: int
    iou: float


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    precision: float
    recall: float


@dataclass(frozen=True)
class EvaluationReport:
    ap: float
    ap50: float
    ap75: float
    ap_small: Optional[float]
    ap_medium: Optional[float]
    ap_large: Optional[float]
    geometry_mode: GeometryMode = GeometryMode.CIRCLE
    pr_curves: dict[float, tuple[PRPoint, ...]] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("ap", "ap50", "ap75"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must be in [0,1], got {v}")
        for name in ("ap_small", "ap_medium", "ap_large"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must be in [0,1] or UNDEFINED, got {v}")
        if self.ap50 < self.ap75 - 1e-9:
            raise ValidationError(f"ap50 ({self.ap50}) must be >= ap75 ({self.ap75})")

    def to_dict(self) -> dict:
        return {
            "ap": self.ap,
            "ap50": self.ap50,
            "ap75": self.ap75,
            "ap_small": self.ap_small,
            "ap_medium": self.ap_medium,
            "ap_large": self.ap_large,
            "geometry_mode": self.geometry_mode.value,
            "pr_curves": {
                f"{iou:g}": [
                    {"threshold": p.threshold, "precision": p.precision, "recall": p.recall} for p in points
                ]
                for iou, points in self.pr_curves.items()
            },
        }


@dataclass(frozen=True)
class LoopComparison:
    """Per-field absolute deltas and relative gains between two reports.

    relative gain = (b - a) / a; None where a field is UNDEFINED on either
    side or the baseline is zero.
    """

    deltas: dict[str, Optional[float]]
    relative_gains: dict[str, Optional[float]]


def ranked_detections(dets: Sequence[CircleAnnotation]) -> list[CircleAnnotation]:
    return sorted(dets, key=lambda a: (-ranking_score(a), a.id))


def match_detections(
    dets: Sequence[CircleAnnotation],
    gts: Sequence[CircleAnnotation],
    iou_threshold: float,
    geometry_mode: GeometryMode = GeometryMode.CIRCLE,
) -> tuple[MatchCounts, tuple[MatchPair, ...]]:
    """Greedy matching: detections in descending-score order each take the
    unmatched ground truth with the highest IoU >= iou_threshold."""
    ranked = ranked_detections(dets)
    gts_sorted = sorted(gts, key=lambda g: g.id)
    taken = [False] * len(gts_sorted)
    pairs = []
    for det in ranked:
        best_index, best_iou = -1, iou_threshold
        for gi, gt in enumerate(gts_sorted):
            if taken[gi]:
                continue
            iou = pair_iou(det, gt, geometry_mode)
            if iou > best_iou or (iou == best_iou and iou >= iou_threshold and best_index == -1):
                best_index, best_iou = gi, iou
        if best_index >= 0:
            taken[best_index] = True
            pairs.append(MatchPair(det.id, gts_sorted[best_index].id, best_iou))
    tp = len(pairs)
    counts = MatchCounts(tp=tp, fp=len(dets) - tp, fn=len(gts) - tp)
    return counts, tuple(pairs)


def _greedy_flags(
    ranked: Sequence[CircleAnnotation],
    gts: Sequence[CircleAnnotation],
    iou_threshold: float,
    mode: GeometryMode,
    area_range: tuple[float, float],
) -> tuple[list[bool], list[bool], int]:
    """COCO-style per-detection TP and ignore flags at one IoU threshold.

    Ground truths with area outside [lo, hi) are ignored; matching iterates
    unignored gts first (ascending id) and never trades an unignored match for
    an ignored one. Unmatched detections whose own area is out of range are
    ignored. Returns (tp_flags, ignore_flags, n_unignored_gts) with flags in
    ranked-detection order.
    """
    lo, hi = area_range
    gt_ignore = {g.id: not (lo <= object_area(g, mode) < hi) for g in gts}
    ordered_gts = sorted(gts, key=lambda g: (gt_ignore[g.id], g.id))
    taken: set[int] = set()
    tp_flags: list[bool] = []
    ig_flags: list[bool] = []
    for det in ranked:
        best_gt, best_iou, best_ignored = None, -1.0, True
        for gt in ordered_gts:
            if gt.id in taken:
                continue
            if best_gt is not None and not best_ignored and gt_ignore[gt.id]:
                break  # an unignored match beats any ignored one
            iou = pair_iou(det, gt, mode)
            if iou < iou_threshold or iou <= best_iou:
                continue
            best_gt, best_iou, best_ignored = gt, iou, gt_ignore[gt.id]
        if best_gt is not None:
            taken.add(best_gt.id)
            tp_flags.append(not best_ignored)
            ig_flags.append(best_ignored)
        else:
            tp_flags.append(False)
            ig_flags.append(not (lo <= object_area(det, mode) < hi))
    n_unignored = sum(1 for g in gts if not gt_ignore[g.id])
    return tp_flags, ig_flags, n_unignored


def _ap_at(
    ranked: Sequence[CircleAnnotation],
    gts: Sequence[CircleAnnotation],
    iou_threshold: float,
    mode: GeometryMode,
    area_range: tuple[float, float],
) -> Optional[float]:
    """101-point interpolated AP at one IoU threshold, or None when the area
    bucket holds no ground truth."""
    tp_flags, ig_flags, n_gts = _greedy_flags(ranked, gts, iou_threshold, mode, area_range)
    if n_gts == 0:
        return None
    precisions: list[float] = []
    recalls: list[float] = []
    tp = fp = 0
    for is_tp, ignored in zip(tp_flags, ig_flags):
        if ignored:
            continue
        if is_tp:
            tp += 1
        else:
            fp += 1
        precisions.append(tp / (tp + fp))
        recalls.append(tp / n_gts)
    if not precisions:
        return 0.0
    # precision envelope: monotone non-increasing from the right
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    ap_sum = 0.0
    j = 0
    for k in range(RECALL_POINTS):
        r = k / (RECALL_POINTS - 1)
        while j < len(recalls) and recalls[j] < r:
            j += 1
        if j < len(precisions):
            ap_sum += precisions[j]
    return ap_sum / RECALL_POINTS


def precision_recall_curve(
    dets: Sequence[CircleAnnotation],
    gts: Sequence[CircleAnnotation],
    iou_threshold: float,
    geometry_mode: GeometryMode = GeometryMode.CIRCLE,
) -> tuple[PRPoint, ...]:
    """One PR point per distinct detection score, swept descending.

    recall = tp / (tp + fn) over all ground truths; precision = tp / (tp + fp)
    with the empty prefix defined as precision 1. Greedy matching is
    prefix-stable in descending-score order, so one pass suffices.
    """
    if not gts:
        raise DomainError("undefined recall: no ground truth objects")
    ranked = ranked_detections(dets)
    tp_flags, _, n_gts = _greedy_flags(ranked, gts, iou_threshold, geometry_mode, _ALL_AREAS)

    points: list[PRPoint] = []
    tp = fp = 0
    for i, (det, is_tp) in enumerate(zip(ranked, tp_flags)):
        if is_tp:
            tp += 1
        else:
            fp += 1
        score = ranking_score(det)
        next_score = ranking_score(ranked[i + 1]) if i + 1 < len(ranked) else None
        if next_score != score:
            points.append(PRPoint(threshold=score, precision=tp / (tp + fp), recall=tp / n_gts))
    return tuple(points)


def average_precision(
    dets: Sequence[CircleAnnotation],
    gts: Sequence[CircleAnnotation],
    geometry_mode: GeometryMode = GeometryMode.CIRCLE,
) -> EvaluationReport:
    """Full COCO-style report over the 0.50:0.05:0.95 IoU grid."""
    if not gts:
        raise DomainError("average precision is undefined without ground truth")
    ranked = ranked_detections(dets)

    def mean_ap(area_range: tuple[float, float]) -> Optional[float]:
        values = [_ap_at(ranked, gts, t, geometry_mode, area_range) for t in IOU_GRID]
        if values[0] is None:
            return None
        return sum(values) / len(values)

    per_iou = {t: _ap_at(ranked, gts, t, geometry_mode, _ALL_AREAS) for t in IOU_GRID}
    curves = {t: precision_recall_curve(dets, gts, t, geometry_mode) for t in IOU_GRID}
    return EvaluationReport(
        ap=sum(per_iou.values()) / len(per_iou),
        ap50=per_iou[IOU_GRID[0]],
        ap75=per_iou[IOU_GRID[5]],
        ap_small=mean_ap(_BUCKETS["small"]),
        ap_medium=mean_ap(_BUCKETS["medium"]),
        ap_large=mean_ap(_BUCKETS["large"]),
        geometry_mode=geometry_mode,
        pr_curves=curves,
    )


_COMPARED_FIELDS = ("ap", "ap50", "ap75", "ap_small", "ap_medium", "ap_large")


def compare_loops(report_a: EvaluationReport, report_b: EvaluationReport) -> LoopComparison:
    """Per-field deltas and relative gains (b - a) / a between two loops."""
    if report_a.geometry_mode is not report_b.geometry_mode:
        raise DomainError(
            f"cannot compare reports with different geometry modes: "
            f"{report_a.geometry_mode.value} vs {report_b.geometry_mode.value}"
        )
    deltas: dict[str, Optional[float]] = {}
    gains: dict[str, Optional[float]] = {}
    for name in _COMPARED_FIELDS:
        a = getattr(report_a, name)
        b = getattr(report_b, name)
        if a is None or b is None:
            deltas[name] = None
            gains[name] = None
            continue
        deltas[name] = b - a
        gains[name] = (b - a) / a if a != 0 else None
    return LoopComparison(deltas=deltas, relative_gains=gains)
