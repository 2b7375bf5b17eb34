"""Aperio ImageScope compatible annotation XML.

A circle is exported as a Type="2" (ellipse) Region whose two vertices are the
bounding-box corners (cx-r, cy-r) and (cx+r, cy+r). Aperio XML has no score
field, so the detection score rides in the Region Text attribute as
"score:<value>" -- Text survives editing inside ImageScope.

Attribute order is fixed: Region(Id, Type, Text), Vertex(X, Y).
"""

from __future__ import annotations

import warnings
import xml.etree.ElementTree as ET

from ..errors import ParseWarning, ValidationError
from ..geometry import Circle
from ..model import AnnotationSet, CircleAnnotation, Provenance, kept_annotations
from .canonical import format_decimal
from .native_xml import _parse_float, _parse_root

_XML_HEADER = b'<?xml version="1.0" encoding="UTF-8"?>\n'

# Non-square imports are coerced to circles via mean radius when the two half
# extents differ by more than this relative tolerance.
_SQUARE_RTOL = 1e-9

ELLIPSE_REGION_TYPE = "2"


def write_imagescope_xml(annotation_set: AnnotationSet, microns_per_pixel: float) -> bytes:
    """Export the currently-kept annotations of an already-filtered set."""
    lines = [
        f'<Annotations MicronsPerPixel="{format_decimal(microns_per_pixel)}">',
        '  <Annotation Id="1" Name="loopcurate" LineColor="65280">',
    ]
    kept = kept_annotations(annotation_set)
    if not kept:
        lines.append("    <Regions/>")
    else:
        lines.append("    <Regions>")
        for a in kept:
            x0, y0, x1, y1 = a.geometry.bounds()
            attrs = [f'Id="{a.id}"', f'Type="{ELLIPSE_REGION_TYPE}"']
            if a.score is not None:
                attrs.append(f'Text="score:{format_decimal(a.score)}"')
            lines.append(f'      <Region {" ".join(attrs)}>')
            lines.append("        <Vertices>")
            lines.append(f'          <Vertex X="{format_decimal(x0)}" Y="{format_decimal(y0)}"/>')
            lines.append(f'          <Vertex X="{format_decimal(x1)}" Y="{format_decimal(y1)}"/>')
            lines.append("        </Vertices>")
            lines.append("      </Region>")
        lines.append("    </Regions>")
    lines.append("  </Annotation>")
    lines.append("</Annotations>")
    return _XML_HEADER + "\n".join(lines).encode("utf-8") + b"\n"


def import_imagescope_xml(data: bytes, slide_id: str = "imported") -> AnnotationSet:
    """Read circles back out of an ImageScope annotation document.

    Square ellipse regions map exactly; non-square ones are coerced with
    r = mean(half-width, half-height) plus a warning. Non-ellipse region types
    are skipped with a warning.
    """
    root = _parse_root(data)
    if root.tag != "Annotations":
        raise ValidationError(f"expected root element Annotations, got {root.tag}", location=root.tag)

    annotations: list[CircleAnnotation] = []
    used_ids: set[int] = set()
    for region_index, region in enumerate(root.iter("Region")):
        where = f"Region #{region_index + 1}"
        rtype = region.get("Type")
        if rtype != ELLIPSE_REGION_TYPE:
            warnings.warn(f"skipping {where}: region type {rtype!r} is not an ellipse", ParseWarning, stacklevel=2)
            continue
        vertices = region.findall(".//Vertex")
        if len(vertices) != 2:
            raise ValidationError(
                f"{where}: ellipse region must have exactly 2 vertices, found {len(vertices)}", location=where
            )
        x0 = _parse_float(_vertex_attr(vertices[0], "X", where), where, "X")
        y0 = _parse_float(_vertex_attr(vertices[0], "Y", where), where, "Y")
        x1 = _parse_float(_vertex_attr(vertices[1], "X", where), where, "X")
        y1 = _parse_float(_vertex_attr(vertices[1], "Y", where), where, "Y")

        half_w = abs(x1 - x0) / 2.0
        half_h = abs(y1 - y0) / 2.0
        if abs(half_w - half_h) > _SQUARE_RTOL * max(1.0, half_w, half_h):
            warnings.warn(
                f"{where}: non-square ellipse ({2 * half_w:g} x {2 * half_h:g}), using mean radius",
                ParseWarning,
                stacklevel=2,
            )
            r = (half_w + half_h) / 2.0
        else:
            r = half_w
        cx = (x0 + x1) / 2.0
        cy = (y0 + y1) / 2.0

        score = _parse_score_text(region.get("Text"))
        ann_id = _region_id(region, used_ids)
        used_ids.add(ann_id)

        try:
            annotations.append(
                CircleAnnotation(
                    id=ann_id,
                    geometry=Circle(cx, cy, r),
                    provenance=Provenance.MACHINE if score is not None else Provenance.HUMAN_ADDED,
                    score=score,
                )
            )
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}", location=where) from exc

    return AnnotationSet(slide_id=slide_id, annotations=tuple(annotations), active_threshold=0.0)


def _vertex_attr(vertex: ET.Element, attr: str, where: str) -> str:
    value = vertex.get(attr)
    if value is None:
        raise ValidationError(f"{where}: vertex is missing attribute {attr!r}", location=where)
    return value


def _parse_score_text(text: str | None) -> float | None:
    if text is None or not text.startswith("score:"):
        return None
    try:
        return float(text[len("score:"):])
    except ValueError:
        return None


def _region_id(region: ET.Element, used: set[int]) -> int:
    raw = region.get("Id")
    if raw is not None:
        try:
            candidate = int(raw)
            if candidate not in used:
                return candidate
        except ValueError:
            pass
    return max(used, default=0) + 1
