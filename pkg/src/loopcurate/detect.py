"""Detector seam: a classical builtin circle detector plus an external-command
adapter that speaks the native XML format.

The builtin path is a desk-scale stand-in for a learned detector: it
grayscale-thresholds the coarsest pyramid level, takes connected components,
fits each one's minimum enclosing circle and scores it by how disk-like the
component is (area / circle area). Coordinates are scaled back to level 0.
"""

from __future__ import annotations

import enum
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import cv2
import numpy as np

from .errors import DetectorError, ValidationError
from .formats.native_xml import parse_native_xml
from .geometry import Circle, circle_iou
from .model import AnnotationSet, CircleAnnotation, Provenance
from .slides import SlideHandle, read_region

# Fixed duplicate suppression applied by the builtin detector only.
DUPLICATE_IOU = 0.8

BUILTIN_DEFAULTS = {
    "intensity_threshold": 200.0,  # grayscale values below this are foreground
    "min_radius": 8.0,             # level-0 pixels
    "max_radius": 512.0,
}


class DetectorKind(enum.Enum):
    BUILTIN_BLOB = "BUILTIN_BLOB"
    EXTERNAL = "EXTERNAL"


@dataclass(frozen=True)
class DetectorSpec:
    kind: DetectorKind
    params: Mapping[str, object] = field(default_factory=dict)
    version_tag: str = "builtin-1"

    def __post_init__(self):
        object.__setattr__(self, "params", dict(self.params))
        if not self.version_tag:
            raise ValidationError("detector version_tag must be non-empty")
        if self.kind is DetectorKind.EXTERNAL and not self.params.get("command"):
            raise ValidationError("EXTERNAL detector requires a 'command' parameter")

    def builtin_param(self, name: str) -> float:
        return float(self.params.get(name, BUILTIN_DEFAULTS[name]))


def detect(slide: SlideHandle, spec: DetectorSpec) -> AnnotationSet:
    """Run a detector over a slide, yielding MACHINE annotations with scores."""
    if spec.kind is DetectorKind.BUILTIN_BLOB:
        return _detect_builtin(slide, spec)
    return _detect_external(slide, spec)


def _detect_builtin(slide: SlideHandle, spec: DetectorSpec) -> AnnotationSet:
    level_index = slide.coarsest_level
    info = slide.level(level_index)
    ds = info.downsample
    region = read_region(slide, level_index, 0, 0, info.width, info.height)

    gray = cv2.cvtColor(region.pixels, cv2.COLOR_RGB2GRAY)
    mask = (gray < spec.builtin_param("intensity_threshold")).astype(np.uint8)
    n_labels, labels, stats, _ = cv2.connectedComponentsWithStats(mask, connectivity=8)

    min_r = spec.builtin_param("min_radius")
    max_r = spec.builtin_param("max_radius")
    candidates: list[CircleAnnotation] = []
    next_id = 1
    for label in range(1, n_labels):
        ys, xs = np.nonzero(labels == label)
        points = np.column_stack([xs, ys]).astype(np.float32)
        (cx, cy), r = cv2.minEnclosingCircle(points)
        r = max(float(r), 0.5)
        area = float(stats[label, cv2.CC_STAT_AREA])
        score = min(area / (np.pi * r * r), 1.0)
        r0 = r * ds
        if not min_r <= r0 <= max_r:
            continue
        candidates.append(
            CircleAnnotation(
                id=next_id,
                geometry=Circle(float(cx) * ds, float(cy) * ds, r0),
                provenance=Provenance.MACHINE,
                score=round(score, 4),
            )
        )
        next_id += 1

    kept = _suppress_duplicates(candidates)
    return AnnotationSet(slide_id=slide.slide_id, annotations=tuple(kept), active_threshold=0.0)


def _suppress_duplicates(candidates: list[CircleAnnotation]) -> list[CircleAnnotation]:
    """Drop any detection overlapping a higher-scored kept one at IoU >= 0.8."""
    order = sorted(candidates, key=lambda a: (-(a.score or 0.0), a.id))
    kept: list[CircleAnnotation] = []
    for cand in order:
        if all(circle_iou(cand.geometry, k.geometry) < DUPLICATE_IOU for k in kept):
            kept.append(cand)
    return sorted(kept, key=lambda a: a.id)


def _detect_external(slide: SlideHandle, spec: DetectorSpec) -> AnnotationSet:
    """Invoke ``command <slide-dir> <output-xml>``; the command must write
    native XML to the output path and exit 0."""
    command = spec.params["command"]
    argv = list(command) if isinstance(command, (list, tuple)) else [str(command)]
    with tempfile.TemporaryDirectory(prefix="loopcurate-detect-") as tmp:
        out_path = Path(tmp) / "detections.xml"
        argv = argv + [str(slide.source), str(out_path)]
        try:
            result = subprocess.run(argv, capture_output=True, text=True, timeout=float(spec.params.get("timeout", 300)))
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise DetectorError(f"external detector failed to run: {exc}") from exc
        if result.returncode != 0:
            raise DetectorError(
                f"external detector exited {result.returncode}: {result.stderr.strip()[:500]}"
            )
        if not out_path.is_file():
            raise DetectorError(f"external detector wrote no output at {out_path}")
        try:
            parsed = parse_native_xml(out_path.read_bytes())
        except Exception as exc:
            raise DetectorError(f"external detector produced malformed XML: {exc}") from exc
    if any(a.provenance is not Provenance.MACHINE for a in parsed.annotations):
        raise DetectorError("external detector output must contain only MACHINE annotations")
    return AnnotationSet(slide_id=slide.slide_id, annotations=parsed.annotations, active_threshold=parsed.active_threshold)
