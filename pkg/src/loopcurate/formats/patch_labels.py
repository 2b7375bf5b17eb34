"""Per-patch class labels, stored as one canonical JSON array.

Key order inside each record is alphabetical (annotation_id, class_code,
labeled_at, labeler, patch_file, slide_id), which canonical_json produces for
free; the canonical form is a fixed point of write(read(.)).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime
from typing import Iterable, Optional, Sequence

from ..errors import ParseError, ValidationError
from .canonical import canonical_json
from .class_config import ClassConfig


@dataclass(frozen=True)
class PatchLabelRecord:
    patch_file: str
    slide_id: str
    annotation_id: int
    class_code: str
    labeled_at: datetime
    labeler: str

    def __post_init__(self):
        if not self.patch_file:
            raise ValidationError("patch_file must be non-empty")
        if not self.class_code:
            raise ValidationError("class_code must be non-empty")


def write_patch_labels(records: Sequence[PatchLabelRecord], config: Optional[ClassConfig] = None) -> bytes:
    if config is not None:
        for i, rec in enumerate(records):
            if not config.has_code(rec.class_code):
                raise ValidationError(f"record {i}: unknown class code {rec.class_code!r}", location=f"record {i}")
    payload = [
        {
            "annotation_id": rec.annotation_id,
            "class_code": rec.class_code,
            "labeled_at": rec.labeled_at.isoformat(),
            "labeler": rec.labeler,
            "patch_file": rec.patch_file,
            "slide_id": rec.slide_id,
        }
        for rec in records
    ]
    return canonical_json(payload)


def read_patch_labels(data: bytes, config: Optional[ClassConfig] = None) -> tuple[PatchLabelRecord, ...]:
    try:
        payload = json.loads(data.decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        line = getattr(exc, "lineno", None)
        column = getattr(exc, "colno", None)
        raise ParseError(f"malformed patch-label JSON: {exc}", line=line, column=column) from exc
    if not isinstance(payload, list):
        raise ValidationError("patch-label file must contain a JSON array", location="document root")

    records = []
    for i, item in enumerate(payload):
        where = f"record {i}"
        if not isinstance(item, dict):
            raise ValidationError(f"{where}: expected an object", location=where)
        try:
            rec = PatchLabelRecord(
                patch_file=item["patch_file"],
                slide_id=item["slide_id"],
                annotation_id=int(item["annotation_id"]),
                class_code=item["class_code"],
                labeled_at=datetime.fromisoformat(item["labeled_at"]),
                labeler=item["labeler"],
            )
        except KeyError as exc:
            raise ValidationError(f"{where}: missing field {exc.args[0]!r}", location=where) from exc
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"{where}: {exc}", location=where) from exc
        if config is not None and not config.has_code(rec.class_code):
            raise ValidationError(f"{where}: unknown class code {rec.class_code!r}", location=where)
        records.append(rec)
    return tuple(records)


def query_labels(records: Iterable[PatchLabelRecord], class_code: str) -> tuple[PatchLabelRecord, ...]:
    """All records labeled with class_code, original order preserved."""
    return tuple(rec for rec in records if rec.class_code == class_code)
