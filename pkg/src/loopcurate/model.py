"""Domain types for circular annotations plus the curation operations.

Everything here is an immutable value; operations are pure functions that
return new values. The score threshold is carried on the AnnotationSet but the
kept/hidden split is always recomputed statelessly from it, so stepping the
threshold down brings machine detections back.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from typing import Iterable, Optional

from .errors import DomainError, NotFoundError, ValidationError
from .geometry import Circle, circle_iou


class Provenance(enum.Enum):
    MACHINE = "MACHINE"
    HUMAN_ADDED = "HUMAN_ADDED"
    HUMAN_EDITED = "HUMAN_EDITED"


class EditKind(enum.Enum):
    ADD = "ADD"
    DELETE = "DELETE"
    MOVE = "MOVE"
    RESIZE = "RESIZE"
    RECLASSIFY = "RECLASSIFY"


class Direction(enum.Enum):
    UP = "UP"
    DOWN = "DOWN"


DEFAULT_THRESHOLD_STEP = 0.05


@dataclass(frozen=True)
class CircleAnnotation:
    """One detected or human-curated object.

    score is present iff the annotation originated from a detector (MACHINE,
    or HUMAN_EDITED geometry corrections of a machine detection); HUMAN_ADDED
    annotations never carry one.
    """

    id: int
    geometry: Circle
    provenance: Provenance
    score: Optional[float] = None
    class_label: Optional[str] = None
    loop_index: int = 0

    def __post_init__(self):
        if self.score is not None:
            if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
                raise ValidationError(f"annotation {self.id}: score must be in [0,1], got {self.score}")
            if self.provenance is Provenance.HUMAN_ADDED:
                raise ValidationError(f"annotation {self.id}: HUMAN_ADDED annotations carry no score")
        elif self.provenance is Provenance.MACHINE:
            raise ValidationError(f"annotation {self.id}: MACHINE annotations require a score")
        if self.loop_index < 0:
            raise ValidationError(f"annotation {self.id}: loop_index must be >= 0")

    @property
    def is_human(self) -> bool:
        return self.provenance is not Provenance.MACHINE


@dataclass(frozen=True)
class AnnotationSet:
    """All annotations for one slide at one loop stage."""

    slide_id: str
    annotations: tuple[CircleAnnotation, ...] = ()
    active_threshold: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "annotations", tuple(self.annotations))
        if not 0.0 <= self.active_threshold <= 1.0:
            raise ValidationError(f"active_threshold must be in [0,1], got {self.active_threshold}")
        ids = [a.id for a in self.annotations]
        if len(ids) != len(set(ids)):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate annotation ids: {dupes}")

    def __len__(self) -> int:
        return len(self.annotations)

    def get(self, ann_id: int) -> CircleAnnotation:
        for a in self.annotations:
            if a.id == ann_id:
                return a
        raise NotFoundError(f"no annotation with id {ann_id} in slide {self.slide_id!r}")

    def has(self, ann_id: int) -> bool:
        return any(a.id == ann_id for a in self.annotations)


@dataclass(frozen=True)
class AnnotationEdit:
    """One manual QA action. DELETE/MOVE/RESIZE/RECLASSIFY reference an
    existing id; ADD carries the new circle and no target."""

    kind: EditKind
    target_id: Optional[int] = None
    circle: Optional[Circle] = None
    class_label: Optional[str] = None
    timestamp: Optional[datetime] = None

    def __post_init__(self):
        if self.kind is EditKind.ADD:
            if self.target_id is not None:
                raise ValidationError("ADD edit must not carry a target_id")
            if self.circle is None:
                raise ValidationError("ADD edit requires a circle payload")
        else:
            if self.target_id is None:
                raise ValidationError(f"{self.kind.value} edit requires a target_id")
            if self.kind in (EditKind.MOVE, EditKind.RESIZE) and self.circle is None:
                raise ValidationError(f"{self.kind.value} edit requires a circle payload")
            if self.kind is EditKind.RECLASSIFY and self.class_label is None:
                raise ValidationError("RECLASSIFY edit requires a class_label payload")


@dataclass(frozen=True)
class EditLog:
    """Append-only record of the edits applied to one slide's machine output."""

    slide_id: str
    edits: tuple[AnnotationEdit, ...] = ()

    def append(self, edit: AnnotationEdit) -> "EditLog":
        return EditLog(self.slide_id, self.edits + (edit,))

    def extend(self, edits: Iterable[AnnotationEdit]) -> "EditLog":
        return EditLog(self.slide_id, self.edits + tuple(edits))


@dataclass(frozen=True)
class CurationDiff:
    """How a curated set differs from the machine output it started from."""

    added: int
    deleted: int
    moved: int
    unchanged: int


def now_utc() -> datetime:
    return datetime.now(timezone.utc)


def is_kept(annotation: CircleAnnotation, threshold: float) -> bool:
    """Inclusive threshold rule: machine detections survive iff
    score >= threshold; human annotations always survive."""
    if annotation.provenance is not Provenance.MACHINE:
        return True
    if annotation.score is None:
        return True
    return annotation.score >= threshold


def kept_annotations(annotation_set: AnnotationSet, threshold: Optional[float] = None) -> tuple[CircleAnnotation, ...]:
    """The visible subset at a threshold (default: the set's active one)."""
    t = annotation_set.active_threshold if threshold is None else threshold
    return tuple(a for a in annotation_set.annotations if is_kept(a, t))


def filter_by_threshold(annotation_set: AnnotationSet, threshold: float) -> AnnotationSet:
    """Materialize the kept subset at ``threshold``.

    Keeps exactly the machine annotations with score >= threshold (boundary
    inclusive) plus every human annotation, preserving order and ids.
    """
    if not 0.0 <= threshold <= 1.0:
        raise DomainError(f"threshold must be in [0,1], got {threshold}")
    return AnnotationSet(
        slide_id=annotation_set.slide_id,
        annotations=kept_annotations(annotation_set, threshold),
        active_threshold=threshold,
    )


def step_threshold(
    annotation_set: AnnotationSet,
    direction: Direction,
    step: float = DEFAULT_THRESHOLD_STEP,
) -> AnnotationSet:
    """Nudge the active threshold up or down, clamped to [0,1].

    All annotations are retained; only the threshold moves, so what is kept is
    re-evaluated statelessly (stepping DOWN grows the kept view again).
    """
    if step <= 0:
        raise DomainError(f"step must be > 0, got {step}")
    delta = step if direction is Direction.UP else -step
    new_t = min(1.0, max(0.0, annotation_set.active_threshold + delta))
    return replace(annotation_set, active_threshold=new_t)


def next_annotation_id(annotation_set: AnnotationSet) -> int:
    """Deterministic fresh id for ADD: max(existing) + 1, starting at 1."""
    return max((a.id for a in annotation_set.annotations), default=0) + 1


def apply_edit(annotation_set: AnnotationSet, edit: AnnotationEdit) -> AnnotationSet:
    """Apply one QA edit, returning the new set.

    ADD inserts a HUMAN_ADDED annotation with a fresh id; DELETE removes the
    target; MOVE/RESIZE swap the geometry and mark the target HUMAN_EDITED
    (a machine score, if any, is kept); RECLASSIFY sets the class label.
    """
    if edit.kind is EditKind.ADD:
        new = CircleAnnotation(
            id=next_annotation_id(annotation_set),
            geometry=edit.circle,
            provenance=Provenance.HUMAN_ADDED,
            class_label=edit.class_label,
        )
        return replace(annotation_set, annotations=annotation_set.annotations + (new,))

    if not annotation_set.has(edit.target_id):
        raise NotFoundError(f"edit targets unknown annotation id {edit.target_id} in slide {annotation_set.slide_id!r}")

    if edit.kind is EditKind.DELETE:
        remaining = tuple(a for a in annotation_set.annotations if a.id != edit.target_id)
        return replace(annotation_set, annotations=remaining)

    def rewrite(a: CircleAnnotation) -> CircleAnnotation:
        if a.id != edit.target_id:
            return a
        if edit.kind in (EditKind.MOVE, EditKind.RESIZE):
            prov = Provenance.HUMAN_EDITED if a.provenance is Provenance.MACHINE else a.provenance
            return replace(a, geometry=edit.circle, provenance=prov)
        return replace(a, class_label=edit.class_label)

    return replace(annotation_set, annotations=tuple(rewrite(a) for a in annotation_set.annotations))


def apply_edits(annotation_set: AnnotationSet, edits: Iterable[AnnotationEdit]) -> AnnotationSet:
    for edit in edits:
        annotation_set = apply_edit(annotation_set, edit)
    return annotation_set


def replay_log(base: AnnotationSet, log: EditLog) -> AnnotationSet:
    """Replay an edit log over the machine output it was recorded against."""
    if log.slide_id != base.slide_id:
        raise DomainError(f"edit log is for slide {log.slide_id!r}, set is for {base.slide_id!r}")
    return apply_edits(base, log.edits)


def diff_sets(machine: AnnotationSet, curated: AnnotationSet, iou_threshold: float = 1.0) -> CurationDiff:
    """Count how curation changed the machine output.

    The four counts partition the union of ids: added (only in curated),
    deleted (only in machine), moved (both, geometry IoU < iou_threshold) and
    unchanged. At the default iou_threshold of 1.0 "moved" means any geometry
    change at all.
    """
    if machine.slide_id != curated.slide_id:
        raise DomainError(f"cannot diff sets for different slides: {machine.slide_id!r} vs {curated.slide_id!r}")
    machine_by_id = {a.id: a for a in machine.annotations}
    curated_by_id = {a.id: a for a in curated.annotations}
    added = sum(1 for i in curated_by_id if i not in machine_by_id)
    deleted = sum(1 for i in machine_by_id if i not in curated_by_id)
    moved = 0
    unchanged = 0
    for i in machine_by_id:
        if i not in curated_by_id:
            continue
        if circle_iou(machine_by_id[i].geometry, curated_by_id[i].geometry) < iou_threshold:
            moved += 1
        else:
            unchanged += 1
    return CurationDiff(added=added, deleted=deleted, moved=moved, unchanged=unchanged)
