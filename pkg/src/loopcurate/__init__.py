"""loopcurate: human-in-the-loop curation of circle detections on tiled slides.

The pieces: immutable annotation model with threshold filtering and QA edits
(model), exact circle geometry (geometry), byte-stable file formats (formats),
pyramidal slide access and patch extraction (slides, synthetic), a detector
seam with a classical builtin (detect), the COCO-style evaluation engine
(evaluation), and the persistent loop workflow with its HTTP API (service).
"""

from .geometry import Circle, box_iou, circle_iou
from .model import (
    AnnotationEdit,
    AnnotationSet,
    CircleAnnotation,
    CurationDiff,
    Direction,
    EditKind,
    EditLog,
    Provenance,
    apply_edit,
    apply_edits,
    diff_sets,
    filter_by_threshold,
    kept_annotations,
    replay_log,
    step_threshold,
)

__version__ = "0.1.0"

__all__ = [
    "Circle",
    "circle_iou",
    "box_iou",
    "CircleAnnotation",
    "AnnotationSet",
    "AnnotationEdit",
    "EditLog",
    "EditKind",
    "Direction",
    "Provenance",
    "CurationDiff",
    "filter_by_threshold",
    "step_threshold",
    "kept_annotations",
    "apply_edit",
    "apply_edits",
    "replay_log",
    "diff_sets",
    "__version__",
]
