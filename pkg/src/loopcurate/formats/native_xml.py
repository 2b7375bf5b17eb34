"""The native score-bearing annotation XML.

Grammar (frozen by golden files):

    <EasierSet slide_id="..." threshold="...">
      <Objects>
        <Circle cx=".." cy=".." r=".." [score=".."] [class=".."] [loop=".."]
                provenance="MACHINE|HUMAN_ADDED|HUMAN_EDITED" id=".."/>
      </Objects>
    </EasierSet>

Numbers carry at most 4 fractional digits, never an exponent. The writer is
hand-rolled (not ElementTree) so attribute order and whitespace are fixed
byte-for-byte; parsing goes through ElementTree for line/column errors.
"""

from __future__ import annotations

import warnings
import xml.etree.ElementTree as ET
from xml.sax.saxutils import quoteattr

from ..errors import ParseError, ParseWarning, ValidationError
from ..geometry import Circle
from ..model import AnnotationSet, CircleAnnotation, Provenance
from .canonical import format_decimal

_XML_HEADER = b'<?xml version="1.0" encoding="UTF-8"?>\n'

_CIRCLE_ATTRS = ("cx", "cy", "r", "score", "class", "loop", "provenance", "id")


def write_native_xml(annotation_set: AnnotationSet) -> bytes:
    lines = [
        f'<EasierSet slide_id={quoteattr(annotation_set.slide_id)} '
        f'threshold="{format_decimal(annotation_set.active_threshold)}">'
    ]
    if not annotation_set.annotations:
        lines.append("  <Objects/>")
    else:
        lines.append("  <Objects>")
        for a in annotation_set.annotations:
            attrs = [
                f'cx="{format_decimal(a.geometry.cx)}"',
                f'cy="{format_decimal(a.geometry.cy)}"',
                f'r="{format_decimal(a.geometry.r)}"',
            ]
            if a.score is not None:
                attrs.append(f'score="{format_decimal(a.score)}"')
            if a.class_label is not None:
                attrs.append(f"class={quoteattr(a.class_label)}")
            if a.loop_index != 0:
                attrs.append(f'loop="{a.loop_index}"')
            attrs.append(f'provenance="{a.provenance.value}"')
            attrs.append(f'id="{a.id}"')
            lines.append(f'    <Circle {" ".join(attrs)}/>')
        lines.append("  </Objects>")
    lines.append("</EasierSet>")
    return _XML_HEADER + "\n".join(lines).encode("utf-8") + b"\n"


def parse_native_xml(data: bytes) -> AnnotationSet:
    root = _parse_root(data)
    if root.tag != "EasierSet":
        raise ValidationError(f"expected root element EasierSet, got {root.tag}", location=root.tag)

    slide_id = root.get("slide_id")
    if slide_id is None:
        raise ValidationError("EasierSet is missing the slide_id attribute", location="EasierSet")
    threshold = _parse_float(root.get("threshold", "0"), "EasierSet", "threshold")
    if not 0.0 <= threshold <= 1.0:
        raise ValidationError(f"threshold must be in [0,1], got {threshold}", location="EasierSet")
    for attr in root.attrib:
        if attr not in ("slide_id", "threshold"):
            warnings.warn(f"ignoring unknown EasierSet attribute {attr!r}", ParseWarning, stacklevel=2)

    objects = root.find("Objects")
    if objects is None:
        raise ValidationError("EasierSet is missing the <Objects> element", location="EasierSet")

    annotations = []
    for index, elem in enumerate(objects):
        if elem.tag != "Circle":
            warnings.warn(f"ignoring unknown element <{elem.tag}> in <Objects>", ParseWarning, stacklevel=2)
            continue
        annotations.append(_parse_circle(elem, index))

    try:
        return AnnotationSet(slide_id=slide_id, annotations=tuple(annotations), active_threshold=threshold)
    except ValidationError as exc:
        raise ValidationError(str(exc), location="EasierSet") from exc


def _parse_circle(elem: ET.Element, index: int) -> CircleAnnotation:
    where = f"Circle #{index + 1}"
    for attr in elem.attrib:
        if attr not in _CIRCLE_ATTRS:
            warnings.warn(f"ignoring unknown attribute {attr!r} on {where}", ParseWarning, stacklevel=3)

    cx = _parse_float(_require(elem, "cx", where), where, "cx")
    cy = _parse_float(_require(elem, "cy", where), where, "cy")
    r = _parse_float(_require(elem, "r", where), where, "r")
    ann_id = _parse_int(_require(elem, "id", where), where, "id")
    where = f"Circle id={ann_id}"

    prov_text = _require(elem, "provenance", where)
    try:
        provenance = Provenance(prov_text)
    except ValueError:
        raise ValidationError(f"{where}: unknown provenance {prov_text!r}", location=where) from None

    score_text = elem.get("score")
    score = _parse_float(score_text, where, "score") if score_text is not None else None
    loop_text = elem.get("loop")
    loop_index = _parse_int(loop_text, where, "loop") if loop_text is not None else 0

    try:
        geometry = Circle(cx, cy, r)
        return CircleAnnotation(
            id=ann_id,
            geometry=geometry,
            provenance=provenance,
            score=score,
            class_label=elem.get("class"),
            loop_index=loop_index,
        )
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}", location=where) from exc


def _parse_root(data: bytes) -> ET.Element:
    try:
        return ET.fromstring(data)
    except ET.ParseError as exc:
        line, column = exc.position if exc.position else (None, None)
        raise ParseError(f"malformed XML: {exc.msg if hasattr(exc, 'msg') else exc}", line=line, column=column) from exc


def _require(elem: ET.Element, attr: str, where: str) -> str:
    value = elem.get(attr)
    if value is None:
        raise ValidationError(f"{where}: missing required attribute {attr!r}", location=where)
    return value


def _parse_float(text: str, where: str, attr: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(f"{where}: attribute {attr!r} is not a number: {text!r}", location=where) from None
    if "e" in text.lower() or "inf" in text.lower() or "nan" in text.lower():
        raise ValidationError(f"{where}: attribute {attr!r} must be plain decimal, got {text!r}", location=where)
    return value


def _parse_int(text: str, where: str, attr: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ValidationError(f"{where}: attribute {attr!r} is not an integer: {text!r}", location=where) from None
