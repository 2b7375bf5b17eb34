"""HTTP/JSON API over the project store.

All JSON bodies are canonical (sorted keys, newline-terminated). Errors come
back as {code, message, location?} with 404 for unknown ids, 409 for edit
conflicts and 400 for domain/validation failures. Region reads return PNG.
"""

from __future__ import annotations

import io
from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, Request, Response
from PIL import Image
from pydantic import BaseModel

from ..detect import DetectorKind, DetectorSpec
from ..errors import (
    ConflictError,
    DomainError,
    FormatError,
    LoopcurateError,
    NotFoundError,
    ParseError,
    ValidationError,
)
from ..evaluation import GeometryMode
from ..formats.canonical import canonical_json
from ..formats.class_config import ClassConfig, ClassDef, load_class_config
from ..formats.patch_labels import PatchLabelRecord
from ..model import CircleAnnotation
from ..slides import open_slide, read_region
from .store import HoldoutItem, ProjectStore, TimingMode, TimingSample, edit_from_dict

from datetime import datetime

_STATUS = {
    NotFoundError: 404,
    ConflictError: 409,
    DomainError: 400,
    ValidationError: 400,
    ParseError: 400,
    FormatError: 400,
}


def _json(payload: Any, status_code: int = 200) -> Response:
    return Response(content=canonical_json(payload), media_type="application/json", status_code=status_code)


def annotation_to_dict(a: CircleAnnotation) -> dict:
    return {
        "id": a.id,
        "cx": a.geometry.cx,
        "cy": a.geometry.cy,
        "r": a.geometry.r,
        "score": a.score,
        "class_label": a.class_label,
        "provenance": a.provenance.value,
        "loop_index": a.loop_index,
    }


def _view_payload(view: dict) -> dict:
    return {
        "slide_id": view["slide_id"],
        "loop_index": view["loop_index"],
        "stage": view["stage"],
        "threshold": view["threshold"],
        "revision": view["revision"],
        "total": len(view["set"].annotations),
        "kept": len(view["kept"]),
        "annotations": [annotation_to_dict(a) for a in view["kept"]],
    }


class ClassDefBody(BaseModel):
    key: str
    code: str
    name: str


class CreateProjectBody(BaseModel):
    name: str
    classes: Optional[list[ClassDefBody]] = None
    class_config_text: Optional[str] = None
    slides: list[str] = []


class StartLoopBody(BaseModel):
    detector: Optional[dict] = None


class ThresholdBody(BaseModel):
    threshold: float


class EditsBody(BaseModel):
    base_revision: int
    edits: list[dict]


class PatchesBody(BaseModel):
    padding_ratio: float = 0.2


class LabelBody(BaseModel):
    patch_file: str
    annotation_id: int
    class_code: str
    labeler: str = "anonymous"
    labeled_at: Optional[str] = None


class LabelsBody(BaseModel):
    records: list[LabelBody]


class TimingBody(BaseModel):
    slide_id: str
    loop_index: int
    mode: str
    objects_curated: int
    active_seconds: float


class HoldoutItemBody(BaseModel):
    gt_xml: str
    dets_xml: Optional[str] = None
    slide: Optional[str] = None


class EvaluateBody(BaseModel):
    holdout: list[HoldoutItemBody]
    geometry_mode: str = "CIRCLE"


def _project_payload(store: ProjectStore, project_id: str) -> dict:
    project = store.get_project(project_id)
    slides = []
    for reg in project.slides:
        handle = open_slide(reg.path)
        slides.append(
            {
                "slide_id": reg.slide_id,
                "path": reg.path,
                "tile_size": handle.tile_size,
                "levels": [
                    {"downsample": l.downsample, "width": l.width, "height": l.height} for l in handle.levels
                ],
            }
        )
    loops = []
    for loop in project.loops:
        loops.append(
            {
                "loop_index": loop.loop_index,
                "detector": (
                    {
                        "kind": loop.detector.kind.value,
                        "params": dict(loop.detector.params),
                        "version_tag": loop.detector.version_tag,
                    }
                    if loop.detector
                    else None
                ),
                "stages": {sid: st.name for sid, st in loop.stages.items()},
                "evaluation": loop.evaluation.to_dict() if loop.evaluation else None,
                "training_export": loop.training_export_path,
            }
        )
    return {
        "project_id": project.project_id,
        "name": project.name,
        "classes": [{"key": c.key, "code": c.code, "name": c.name} for c in project.class_config.classes],
        "slides": slides,
        "loops": loops,
    }


def create_app(root: str | Path) -> FastAPI:
    store = ProjectStore(root)
    app = FastAPI(title="loopcurate", docs_url=None, redoc_url=None)

    @app.exception_handler(LoopcurateError)
    async def _domain_error(request: Request, exc: LoopcurateError):
        status = 500
        for cls, code in _STATUS.items():
            if isinstance(exc, cls):
                status = code
                break
        payload = {"code": exc.code, "message": str(exc)}
        location = getattr(exc, "location", None)
        if location:
            payload["location"] = location
        return _json(payload, status_code=status)

    @app.get("/projects")
    def list_projects():
        return _json({"projects": store.list_projects()})

    @app.post("/projects")
    def create_project(body: CreateProjectBody):
        if body.class_config_text is not None:
            config = load_class_config(body.class_config_text.encode("utf-8"))
        elif body.classes:
            config = ClassConfig(tuple(ClassDef(c.key, c.code, c.name) for c in body.classes))
        else:
            raise ValidationError("provide classes or class_config_text")
        project = store.create_project(body.name, config, body.slides)
        return _json(_project_payload(store, project.project_id), status_code=201)

    @app.get("/projects/{project_id}")
    def get_project(project_id: str):
        return _json(_project_payload(store, project_id))

    @app.post("/projects/{project_id}/slides")
    def register_slide(project_id: str, body: dict):
        if "path" not in body:
            raise ValidationError("body must contain a slide 'path'")
        reg = store.register_slide(project_id, body["path"])
        return _json({"slide_id": reg.slide_id, "path": reg.path}, status_code=201)

    @app.post("/projects/{project_id}/loops")
    def start_loop(project_id: str, body: StartLoopBody):
        detector = None
        if body.detector is not None:
            detector = DetectorSpec(
                kind=DetectorKind(body.detector["kind"]),
                params=body.detector.get("params", {}),
                version_tag=body.detector.get("version_tag", "unversioned"),
            )
        loop = store.start_loop(project_id, detector)
        return _json(
            {"loop_index": loop.loop_index, "stages": {sid: st.name for sid, st in loop.stages.items()}},
            status_code=201,
        )

    @app.get("/projects/{project_id}/slides/{slide_id}/annotations")
    def get_annotations(project_id: str, slide_id: str, threshold: Optional[float] = None, loop: Optional[int] = None):
        view = store.slide_view(project_id, slide_id, loop_index=loop, threshold=threshold)
        return _json(_view_payload(view))

    @app.post("/projects/{project_id}/slides/{slide_id}/threshold")
    def set_threshold(project_id: str, slide_id: str, body: ThresholdBody):
        view = store.set_threshold(project_id, slide_id, body.threshold)
        return _json(_view_payload(view))

    @app.post("/projects/{project_id}/slides/{slide_id}/edits")
    def submit_edits(project_id: str, slide_id: str, body: EditsBody):
        edits = [edit_from_dict(e) for e in body.edits]
        view = store.submit_edits(project_id, slide_id, edits, expected_revision=body.base_revision)
        return _json(_view_payload(view))

    @app.post("/projects/{project_id}/slides/{slide_id}/finalize")
    def finalize(project_id: str, slide_id: str):
        view = store.finalize_slide(project_id, slide_id)
        return _json(_view_payload(view))

    @app.get("/projects/{project_id}/slides/{slide_id}/region")
    def get_region(project_id: str, slide_id: str, level: int, x: int, y: int, w: int, h: int):
        project = store.get_project(project_id)
        reg = project.slide(slide_id)
        patch = read_region(open_slide(reg.path), level, x, y, w, h)
        buf = io.BytesIO()
        Image.fromarray(patch.pixels).save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/projects/{project_id}/slides/{slide_id}/patches")
    def extract_slide_patches(project_id: str, slide_id: str, body: PatchesBody):
        manifest = store.extract_slide_patches(project_id, slide_id, body.padding_ratio)
        return _json(
            {
                "entries": [
                    {
                        "annotation_id": e.annotation_id,
                        "patch_file": e.patch_file,
                        "origin": list(e.origin),
                        "size": e.size,
                        "padding_used": e.padding_used,
                    }
                    for e in manifest.entries
                ]
            }
        )

    @app.get("/projects/{project_id}/slides/{slide_id}/patches/{name}")
    def get_patch(project_id: str, slide_id: str, name: str):
        project = store.get_project(project_id)
        loop = store.current_loop(project)
        path = store._slide_dir(project_id, loop.loop_index, slide_id) / "patches" / Path(name).name
        if not path.is_file():
            raise NotFoundError(f"no patch {name!r} for slide {slide_id!r}")
        return Response(content=path.read_bytes(), media_type="image/png")

    @app.post("/projects/{project_id}/slides/{slide_id}/labels")
    def put_labels(project_id: str, slide_id: str, body: LabelsBody):
        records = [
            PatchLabelRecord(
                patch_file=r.patch_file,
                slide_id=slide_id,
                annotation_id=r.annotation_id,
                class_code=r.class_code,
                labeled_at=datetime.fromisoformat(r.labeled_at) if r.labeled_at else datetime.now().astimezone(),
                labeler=r.labeler,
            )
            for r in body.records
        ]
        merged = store.put_labels(project_id, slide_id, records)
        return _json({"count": len(merged)})

    @app.get("/projects/{project_id}/slides/{slide_id}/labels")
    def get_labels(project_id: str, slide_id: str):
        records = store.get_labels(project_id, slide_id)
        return _json(
            {
                "records": [
                    {
                        "annotation_id": r.annotation_id,
                        "class_code": r.class_code,
                        "labeled_at": r.labeled_at.isoformat(),
                        "labeler": r.labeler,
                        "patch_file": r.patch_file,
                        "slide_id": r.slide_id,
                    }
                    for r in records
                ]
            }
        )

    @app.post("/projects/{project_id}/timing")
    def record_timing(project_id: str, body: TimingBody):
        try:
            mode = TimingMode(body.mode)
        except ValueError:
            raise ValidationError(f"unknown timing mode {body.mode!r}") from None
        sample = TimingSample(
            slide_id=body.slide_id,
            loop_index=body.loop_index,
            mode=mode,
            objects_curated=body.objects_curated,
            active_seconds=body.active_seconds,
        )
        return _json(store.record_timing(project_id, sample))

    @app.post("/projects/{project_id}/loops/{loop_index}/export")
    def export_loop(project_id: str, loop_index: int):
        export = store.export_training_set(project_id, loop_index)
        return _json(export.to_dict())

    @app.post("/projects/{project_id}/loops/{loop_index}/evaluate")
    def evaluate_loop(project_id: str, loop_index: int, body: EvaluateBody):
        try:
            mode = GeometryMode(body.geometry_mode)
        except ValueError:
            raise ValidationError(f"unknown geometry mode {body.geometry_mode!r}") from None
        holdout = [
            HoldoutItem(
                gt_xml=Path(item.gt_xml),
                dets_xml=Path(item.dets_xml) if item.dets_xml else None,
                slide=Path(item.slide) if item.slide else None,
            )
            for item in body.holdout
        ]
        report = store.evaluate_loop(project_id, loop_index, holdout, mode)
        return _json(report.to_dict())

    @app.get("/projects/{project_id}/stats")
    def stats(project_id: str):
        return _json(store.project_stats(project_id))

    return app
