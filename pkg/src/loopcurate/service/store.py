"""On-disk project store and workflow operations.

A project is an inspectable directory tree under the storage root:

    <root>/<project_id>/
      project.json                 # id, name, slide registrations
      class_config.txt
      timing.jsonl                 # one timing sample per line
      loops/<n>/loop.json          # loop index + detector spec
      loops/<n>/slides/<sid>/
        machine.xml                # detector output (absent on loop 1)
        state.json                 # stage + active threshold
        edits.jsonl                # append-only WAL, one line per edit batch
        curated.xml                # materialized at export time
        labels.json                # patch labels, one record per patch
        patches/                   # extracted patches + manifest.json
      loops/<n>/export.json
      loops/<n>/evaluation.json

Concurrency: one writer per (project, slide), enforced with in-process locks
plus an optimistic revision check (revision = number of committed edit
batches). Reads never take the write lock; they see either the pre- or the
post-append log because a batch is a single appended line, fsync'd before the
call returns. An interrupted append leaves a torn final line, which the loader
discards, restoring the pre-edit state.
"""

from __future__ import annotations

import enum
import json
import math
import os
import re
import threading
from dataclasses import dataclass, replace
from datetime import datetime
from pathlib import Path
from typing import Optional, Sequence

from ..detect import DetectorKind, DetectorSpec, detect
from ..errors import (
    ConflictError,
    DomainError,
    NotFoundError,
    ValidationError,
)
from ..evaluation import EvaluationReport, GeometryMode, average_precision
from ..formats.canonical import canonical_json
from ..formats.class_config import ClassConfig, load_class_config, save_class_config
from ..formats.native_xml import parse_native_xml, write_native_xml
from ..formats.patch_labels import PatchLabelRecord, read_patch_labels, write_patch_labels
from ..geometry import Circle
from ..model import (
    AnnotationEdit,
    AnnotationSet,
    CircleAnnotation,
    EditKind,
    apply_edits,
    diff_sets,
    filter_by_threshold,
    kept_annotations,
)
from ..slides import PatchManifest, extract_patches, open_slide

DEFAULT_IDLE_GAP_SECONDS = 60.0


class Stage(enum.IntEnum):
    """Per-slide curation stage; transitions only move forward."""

    DETECTED = 1
    FILTERED = 2
    QA_IN_PROGRESS = 3
    CURATED = 4


class TimingMode(enum.Enum):
    PURE_MANUAL = "PURE_MANUAL"
    ASSISTED = "ASSISTED"


@dataclass(frozen=True)
class TimingSample:
    slide_id: str
    loop_index: int
    mode: TimingMode
    objects_curated: int
    active_seconds: float

    def __post_init__(self):
        if self.objects_curated <= 0:
            raise ValidationError("objects_curated must be > 0")
        if not (math.isfinite(self.active_seconds) and self.active_seconds >= 0):
            raise ValidationError("active_seconds must be finite and >= 0")


@dataclass(frozen=True)
class SlideRegistration:
    slide_id: str
    path: str


@dataclass(frozen=True)
class LoopRecord:
    loop_index: int
    detector: Optional[DetectorSpec]
    stages: dict[str, Stage]
    evaluation: Optional[EvaluationReport] = None
    training_export_path: Optional[str] = None


@dataclass(frozen=True)
class Project:
    project_id: str
    name: str
    class_config: ClassConfig
    slides: tuple[SlideRegistration, ...]
    loops: tuple[LoopRecord, ...]

    def slide(self, slide_id: str) -> SlideRegistration:
        for s in self.slides:
            if s.slide_id == slide_id:
                return s
        raise NotFoundError(f"no slide {slide_id!r} registered in project {self.project_id!r}")


@dataclass(frozen=True)
class TrainingExportEntry:
    slide_id: str
    curated_xml: str
    patch_manifest: Optional[str]


@dataclass(frozen=True)
class TrainingExport:
    loop_index: int
    entries: tuple[TrainingExportEntry, ...]
    class_counts: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "loop_index": self.loop_index,
            "entries": [
                {"slide_id": e.slide_id, "curated_xml": e.curated_xml, "patch_manifest": e.patch_manifest}
                for e in self.entries
            ],
            "class_counts": dict(sorted(self.class_counts.items())),
            "total_objects": sum(self.class_counts.values()),
        }


@dataclass(frozen=True)
class HoldoutItem:
    """One holdout slide: ground truth XML plus either ready-made detections
    or a slide to run the loop's detector on."""

    gt_xml: Path
    dets_xml: Optional[Path] = None
    slide: Optional[Path] = None

    def __post_init__(self):
        if (self.dets_xml is None) == (self.slide is None):
            raise ValidationError("holdout item needs exactly one of dets_xml or slide")


def labor_reduction(manual_spo: float, assisted_spo: float) -> float:
    """Fraction of manual effort saved: (manual - assisted) / manual."""
    if manual_spo <= 0:
        raise DomainError(f"manual seconds-per-object must be > 0, got {manual_spo}")
    return (manual_spo - assisted_spo) / manual_spo


def active_seconds_from_events(
    event_times: Sequence[float], idle_gap_seconds: float = DEFAULT_IDLE_GAP_SECONDS
) -> float:
    """Sum inter-event gaps, dropping idle gaps longer than the threshold."""
    ordered = sorted(event_times)
    return sum(
        b - a for a, b in zip(ordered, ordered[1:]) if b - a <= idle_gap_seconds
    )


# --- edit (de)serialization shared by the WAL and the HTTP API ---


def edit_to_dict(edit: AnnotationEdit) -> dict:
    payload: dict = {"kind": edit.kind.value}
    if edit.target_id is not None:
        payload["target_id"] = edit.target_id
    if edit.circle is not None:
        payload["circle"] = {"cx": edit.circle.cx, "cy": edit.circle.cy, "r": edit.circle.r}
    if edit.class_label is not None:
        payload["class_label"] = edit.class_label
    if edit.timestamp is not None:
        payload["timestamp"] = edit.timestamp.isoformat()
    return payload


def edit_from_dict(payload: dict) -> AnnotationEdit:
    try:
        kind = EditKind(payload["kind"])
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"bad edit payload: {exc}") from exc
    circle = None
    if "circle" in payload and payload["circle"] is not None:
        c = payload["circle"]
        try:
            circle = Circle(float(c["cx"]), float(c["cy"]), float(c["r"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad circle payload: {exc}") from exc
    ts = payload.get("timestamp")
    return AnnotationEdit(
        kind=kind,
        target_id=payload.get("target_id"),
        circle=circle,
        class_label=payload.get("class_label"),
        timestamp=datetime.fromisoformat(ts) if ts else None,
    )


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _slug(name: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")
    if not slug:
        raise DomainError(f"project name {name!r} does not yield a usable id")
    return slug


class ProjectStore:
    """All project state under one storage root directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[tuple[str, str], threading.Lock] = {}
        self._locks_guard = threading.Lock()

    # -- paths --------------------------------------------------------------

    def project_dir(self, project_id: str) -> Path:
        return self.root / project_id

    def _loop_dir(self, project_id: str, loop_index: int) -> Path:
        return self.project_dir(project_id) / "loops" / str(loop_index)

    def _slide_dir(self, project_id: str, loop_index: int, slide_id: str) -> Path:
        return self._loop_dir(project_id, loop_index) / "slides" / slide_id

    def _slide_lock(self, project_id: str, slide_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault((project_id, slide_id), threading.Lock())

    # -- projects -----------------------------------------------------------

    def create_project(
        self, name: str, class_config: ClassConfig, slide_paths: Sequence[str | Path] = ()
    ) -> Project:
        project_id = _slug(name)
        pdir = self.project_dir(project_id)
        if pdir.exists():
            raise DomainError(f"project name {name!r} is already taken (id {project_id!r})")
        pdir.mkdir(parents=True)
        (pdir / "class_config.txt").write_bytes(save_class_config(class_config))
        _atomic_write(pdir / "project.json", canonical_json({"name": name, "project_id": project_id, "slides": []}))
        for path in slide_paths:
            self.register_slide(project_id, path)
        return self.get_project(project_id)

    def list_projects(self) -> list[str]:
        return sorted(p.name for p in self.root.iterdir() if (p / "project.json").is_file())

    def get_project(self, project_id: str) -> Project:
        pdir = self.project_dir(project_id)
        meta_path = pdir / "project.json"
        if not meta_path.is_file():
            raise NotFoundError(f"no project {project_id!r} under {self.root}")
        meta = json.loads(meta_path.read_text("utf-8"))
        class_config = load_class_config((pdir / "class_config.txt").read_bytes())
        slides = tuple(SlideRegistration(s["slide_id"], s["path"]) for s in meta["slides"])
        loops = tuple(self._load_loop(project_id, n, slides) for n in self._loop_indices(project_id))
        return Project(
            project_id=project_id, name=meta["name"], class_config=class_config, slides=slides, loops=loops
        )

    def register_slide(self, project_id: str, path: str | Path) -> SlideRegistration:
        project = self.get_project(project_id)
        if project.loops:
            raise DomainError("slides must be registered before the first loop starts")
        handle = open_slide(path)
        if any(s.slide_id == handle.slide_id for s in project.slides):
            raise DomainError(f"slide id {handle.slide_id!r} already registered")
        reg = SlideRegistration(slide_id=handle.slide_id, path=str(Path(path).resolve()))
        meta = {
            "name": project.name,
            "project_id": project_id,
            "slides": [{"slide_id": s.slide_id, "path": s.path} for s in project.slides + (reg,)],
        }
        _atomic_write(self.project_dir(project_id) / "project.json", canonical_json(meta))
        return reg

    # -- loops --------------------------------------------------------------

    def _loop_indices(self, project_id: str) -> list[int]:
        loops_dir = self.project_dir(project_id) / "loops"
        if not loops_dir.is_dir():
            return []
        return sorted(int(p.name) for p in loops_dir.iterdir() if p.name.isdigit())

    def _load_loop(self, project_id: str, loop_index: int, slides: tuple[SlideRegistration, ...]) -> LoopRecord:
        ldir = self._loop_dir(project_id, loop_index)
        meta = json.loads((ldir / "loop.json").read_text("utf-8"))
        detector = None
        if meta.get("detector"):
            d = meta["detector"]
            detector = DetectorSpec(kind=DetectorKind(d["kind"]), params=d["params"], version_tag=d["version_tag"])
        stages = {s.slide_id: self._slide_state(project_id, loop_index, s.slide_id)[0] for s in slides}
        evaluation = None
        eval_path = ldir / "evaluation.json"
        if eval_path.is_file():
            evaluation = _report_from_dict(json.loads(eval_path.read_text("utf-8")))
        export_path = ldir / "export.json"
        return LoopRecord(
            loop_index=loop_index,
            detector=detector,
            stages=stages,
            evaluation=evaluation,
            training_export_path=str(export_path) if export_path.is_file() else None,
        )

    def current_loop(self, project: Project) -> LoopRecord:
        if not project.loops:
            raise DomainError(f"project {project.project_id!r} has no loops yet")
        return project.loops[-1]

    def start_loop(self, project_id: str, detector: Optional[DetectorSpec]) -> LoopRecord:
        project = self.get_project(project_id)
        if not project.slides:
            raise DomainError("register at least one slide before starting a loop")
        loop_index = len(project.loops) + 1
        if project.loops:
            previous = project.loops[-1]
            incomplete = sorted(sid for sid, st in previous.stages.items() if st is not Stage.CURATED)
            if incomplete:
                raise DomainError(
                    f"loop {previous.loop_index} is not fully curated yet (pending: {', '.join(incomplete)})"
                )
        if detector is None and loop_index > 1:
            raise DomainError("a detector is required for every loop after the first")

        ldir = self._loop_dir(project_id, loop_index)
        ldir.mkdir(parents=True)
        detector_meta = None
        if detector is not None:
            detector_meta = {
                "kind": detector.kind.value,
                "params": dict(detector.params),
                "version_tag": detector.version_tag,
            }
        _atomic_write(ldir / "loop.json", canonical_json({"loop_index": loop_index, "detector": detector_meta}))

        for reg in project.slides:
            sdir = self._slide_dir(project_id, loop_index, reg.slide_id)
            sdir.mkdir(parents=True)
            if detector is not None:
                machine = detect(open_slide(reg.path), detector)
                machine = replace(
                    machine,
                    annotations=tuple(replace(a, loop_index=loop_index) for a in machine.annotations),
                )
                _atomic_write(sdir / "machine.xml", write_native_xml(machine))
                stage = Stage.DETECTED
            else:
                stage = Stage.QA_IN_PROGRESS
            self._write_slide_state(sdir, stage, threshold=0.0)
        return self._load_loop(project_id, loop_index, project.slides)

    # -- per-slide state ----------------------------------------------------

    def _write_slide_state(self, sdir: Path, stage: Stage, threshold: float) -> None:
        _atomic_write(sdir / "state.json", canonical_json({"stage": stage.name, "threshold": threshold}))

    def _slide_state(self, project_id: str, loop_index: int, slide_id: str) -> tuple[Stage, float]:
        sdir = self._slide_dir(project_id, loop_index, slide_id)
        state_path = sdir / "state.json"
        if not state_path.is_file():
            raise NotFoundError(f"slide {slide_id!r} has no state in loop {loop_index}")
        state = json.loads(state_path.read_text("utf-8"))
        return Stage[state["stage"]], float(state["threshold"])

    def _machine_set(self, project_id: str, loop_index: int, slide_id: str, threshold: float) -> AnnotationSet:
        machine_path = self._slide_dir(project_id, loop_index, slide_id) / "machine.xml"
        if machine_path.is_file():
            parsed = parse_native_xml(machine_path.read_bytes())
            return replace(parsed, active_threshold=threshold)
        return AnnotationSet(slide_id=slide_id, annotations=(), active_threshold=threshold)

    def _load_batches(self, sdir: Path) -> list[list[AnnotationEdit]]:
        """Read the WAL. A batch commits only when its trailing newline hits
        disk; bytes after the last newline are a torn append and are dropped."""
        log_path = sdir / "edits.jsonl"
        if not log_path.is_file():
            return []
        committed, _, _torn = log_path.read_bytes().rpartition(b"\n")
        batches: list[list[AnnotationEdit]] = []
        for line in committed.split(b"\n"):
            if not line:
                continue
            try:
                payload = json.loads(line.decode("utf-8"))
                batches.append([edit_from_dict(e) for e in payload["edits"]])
            except (ValueError, KeyError, UnicodeDecodeError) as exc:
                raise ValidationError(f"corrupt edit log {log_path} at batch {len(batches)}: {exc}") from exc
        return batches

    def slide_view(
        self, project_id: str, slide_id: str, loop_index: Optional[int] = None, threshold: Optional[float] = None
    ) -> dict:
        """Current annotation state: full set, kept view, revision, stage."""
        project = self.get_project(project_id)
        project.slide(slide_id)
        loop = self.current_loop(project) if loop_index is None else self._require_loop(project, loop_index)
        stage, active_threshold = self._slide_state(project_id, loop.loop_index, slide_id)
        t = active_threshold if threshold is None else threshold
        if not 0.0 <= t <= 1.0:
            raise DomainError(f"threshold must be in [0,1], got {t}")
        sdir = self._slide_dir(project_id, loop.loop_index, slide_id)
        batches = self._load_batches(sdir)
        base = self._machine_set(project_id, loop.loop_index, slide_id, t)
        current = base
        for batch in batches:
            current = apply_edits(current, batch)
        return {
            "slide_id": slide_id,
            "loop_index": loop.loop_index,
            "stage": stage.name,
            "threshold": t,
            "revision": len(batches),
            "set": current,
            "kept": kept_annotations(current, t),
        }

    def set_threshold(self, project_id: str, slide_id: str, threshold: float) -> dict:
        if not 0.0 <= threshold <= 1.0:
            raise DomainError(f"threshold must be in [0,1], got {threshold}")
        project = self.get_project(project_id)
        project.slide(slide_id)
        loop = self.current_loop(project)
        with self._slide_lock(project_id, slide_id):
            stage, _ = self._slide_state(project_id, loop.loop_index, slide_id)
            if stage is Stage.CURATED:
                raise DomainError(f"slide {slide_id!r} is already curated in loop {loop.loop_index}")
            new_stage = Stage.FILTERED if stage is Stage.DETECTED else stage
            sdir = self._slide_dir(project_id, loop.loop_index, slide_id)
            self._write_slide_state(sdir, new_stage, threshold)
        return self.slide_view(project_id, slide_id)

    def submit_edits(
        self, project_id: str, slide_id: str, edits: Sequence[AnnotationEdit], expected_revision: int
    ) -> dict:
        """Append one batch atomically; optimistic conflict on stale revision."""
        project = self.get_project(project_id)
        project.slide(slide_id)
        loop = self.current_loop(project)
        with self._slide_lock(project_id, slide_id):
            stage, threshold = self._slide_state(project_id, loop.loop_index, slide_id)
            if stage not in (Stage.FILTERED, Stage.QA_IN_PROGRESS):
                raise DomainError(
                    f"slide {slide_id!r} is at stage {stage.name}; edits need FILTERED or QA_IN_PROGRESS"
                )
            sdir = self._slide_dir(project_id, loop.loop_index, slide_id)
            batches = self._load_batches(sdir)
            revision = len(batches)
            if expected_revision != revision:
                raise ConflictError(
                    f"revision mismatch for slide {slide_id!r}: expected {expected_revision}, have {revision}"
                )
            # validate the batch against the current set before committing
            base = self._machine_set(project_id, loop.loop_index, slide_id, threshold)
            current = base
            for batch in batches:
                current = apply_edits(current, batch)
            for e in edits:
                if e.class_label is not None and not project.class_config.has_code(e.class_label):
                    raise ValidationError(f"unknown class code {e.class_label!r}")
            apply_edits(current, edits)

            if edits:
                line = canonical_json({"edits": [edit_to_dict(e) for e in edits]})
                with open(sdir / "edits.jsonl", "ab") as fh:
                    fh.write(line)
                    fh.flush()
                    os.fsync(fh.fileno())
                if stage is Stage.FILTERED:
                    self._write_slide_state(sdir, Stage.QA_IN_PROGRESS, threshold)
        return self.slide_view(project_id, slide_id)

    def finalize_slide(self, project_id: str, slide_id: str) -> dict:
        project = self.get_project(project_id)
        project.slide(slide_id)
        loop = self.current_loop(project)
        with self._slide_lock(project_id, slide_id):
            stage, threshold = self._slide_state(project_id, loop.loop_index, slide_id)
            sdir = self._slide_dir(project_id, loop.loop_index, slide_id)
            self._write_slide_state(sdir, Stage.CURATED, threshold)
        return self.slide_view(project_id, slide_id)

    # -- patches and labels ---------------------------------------------------

    def extract_slide_patches(
        self, project_id: str, slide_id: str, padding_ratio: float = 0.2, loop_index: Optional[int] = None
    ) -> PatchManifest:
        project = self.get_project(project_id)
        reg = project.slide(slide_id)
        loop = self.current_loop(project) if loop_index is None else self._require_loop(project, loop_index)
        view = self.slide_view(project_id, slide_id, loop.loop_index)
        kept_set = filter_by_threshold(view["set"], view["threshold"])
        out_dir = self._slide_dir(project_id, loop.loop_index, slide_id) / "patches"
        return extract_patches(open_slide(reg.path), kept_set, padding_ratio, out_dir)

    def put_labels(self, project_id: str, slide_id: str, records: Sequence[PatchLabelRecord]) -> tuple[PatchLabelRecord, ...]:
        """Upsert labels keyed by patch_file; the latest record per patch wins."""
        project = self.get_project(project_id)
        project.slide(slide_id)
        loop = self.current_loop(project)
        for rec in records:
            if not project.class_config.has_code(rec.class_code):
                raise ValidationError(f"unknown class code {rec.class_code!r}")
        with self._slide_lock(project_id, slide_id):
            existing = {r.patch_file: r for r in self.get_labels(project_id, slide_id, loop.loop_index)}
            for rec in records:
                existing[rec.patch_file] = rec
            merged = tuple(existing[k] for k in sorted(existing))
            path = self._slide_dir(project_id, loop.loop_index, slide_id) / "labels.json"
            _atomic_write(path, write_patch_labels(merged, project.class_config))
        return merged

    def get_labels(self, project_id: str, slide_id: str, loop_index: Optional[int] = None) -> tuple[PatchLabelRecord, ...]:
        project = self.get_project(project_id)
        loop = self.current_loop(project) if loop_index is None else self._require_loop(project, loop_index)
        path = self._slide_dir(project_id, loop.loop_index, slide_id) / "labels.json"
        if not path.is_file():
            return ()
        return read_patch_labels(path.read_bytes(), project.class_config)

    # -- timing ---------------------------------------------------------------

    def record_timing(self, project_id: str, sample: TimingSample) -> dict:
        pdir = self.project_dir(project_id)
        if not (pdir / "project.json").is_file():
            raise NotFoundError(f"no project {project_id!r}")
        line = canonical_json(
            {
                "slide_id": sample.slide_id,
                "loop_index": sample.loop_index,
                "mode": sample.mode.value,
                "objects_curated": sample.objects_curated,
                "active_seconds": sample.active_seconds,
            }
        )
        with open(pdir / "timing.jsonl", "ab") as fh:
            fh.write(line)
            fh.flush()
            os.fsync(fh.fileno())
        return self.timing_stats(project_id)

    def timing_samples(self, project_id: str) -> list[TimingSample]:
        path = self.project_dir(project_id) / "timing.jsonl"
        if not path.is_file():
            return []
        samples = []
        for line in path.read_bytes().splitlines():
            if not line:
                continue
            d = json.loads(line.decode("utf-8"))
            samples.append(
                TimingSample(
                    slide_id=d["slide_id"],
                    loop_index=d["loop_index"],
                    mode=TimingMode(d["mode"]),
                    objects_curated=d["objects_curated"],
                    active_seconds=d["active_seconds"],
                )
            )
        return samples

    def timing_stats(self, project_id: str) -> dict:
        """Per-mode seconds-per-object plus the labor reduction when both
        modes have data."""
        samples = self.timing_samples(project_id)
        spo: dict[str, Optional[float]] = {}
        for mode in TimingMode:
            subset = [s for s in samples if s.mode is mode]
            seconds = sum(s.active_seconds for s in subset)
            objects = sum(s.objects_curated for s in subset)
            spo[mode.value] = seconds / objects if objects else None
        manual, assisted = spo[TimingMode.PURE_MANUAL.value], spo[TimingMode.ASSISTED.value]
        reduction = None
        if manual and assisted is not None:
            reduction = labor_reduction(manual, assisted)
        return {"seconds_per_object": spo, "labor_reduction": reduction, "samples": len(samples)}

    # -- export and evaluation -------------------------------------------------

    def export_training_set(self, project_id: str, loop_index: int) -> TrainingExport:
        project = self.get_project(project_id)
        loop = self._require_loop(project, loop_index)
        pending = sorted(sid for sid, st in loop.stages.items() if st is not Stage.CURATED)
        if pending:
            raise DomainError(f"cannot export loop {loop_index}: slide(s) not curated: {', '.join(pending)}")

        entries = []
        class_counts: dict[str, int] = {}
        for reg in sorted(project.slides, key=lambda s: s.slide_id):
            view = self.slide_view(project_id, reg.slide_id, loop_index)
            curated = filter_by_threshold(view["set"], view["threshold"])
            sdir = self._slide_dir(project_id, loop_index, reg.slide_id)
            curated_path = sdir / "curated.xml"
            _atomic_write(curated_path, write_native_xml(curated))
            manifest_path = sdir / "patches" / "manifest.json"
            labeled = self.get_labels(project_id, reg.slide_id, loop_index)
            if manifest_path.is_file():
                manifest = PatchManifest.from_json(manifest_path.read_bytes())
                patch_files = {e.patch_file for e in manifest.entries}
                for rec in labeled:
                    if rec.patch_file in patch_files:
                        class_counts[rec.class_code] = class_counts.get(rec.class_code, 0) + 1
            entries.append(
                TrainingExportEntry(
                    slide_id=reg.slide_id,
                    curated_xml=str(curated_path.relative_to(self.project_dir(project_id))),
                    patch_manifest=(
                        str(manifest_path.relative_to(self.project_dir(project_id)))
                        if manifest_path.is_file()
                        else None
                    ),
                )
            )
        export = TrainingExport(loop_index=loop_index, entries=tuple(entries), class_counts=class_counts)
        _atomic_write(self._loop_dir(project_id, loop_index) / "export.json", canonical_json(export.to_dict()))
        return export

    def evaluate_loop(
        self,
        project_id: str,
        loop_index: int,
        holdout: Sequence[HoldoutItem],
        geometry_mode: GeometryMode = GeometryMode.CIRCLE,
    ) -> EvaluationReport:
        """Pool the holdout slides into one evaluation problem.

        Each slide's coordinates are shifted so nothing from different slides
        can overlap; matching per slide plus globally pooled ranking is then
        exactly single-problem evaluation.
        """
        project = self.get_project(project_id)
        loop = self._require_loop(project, loop_index)
        if not holdout:
            raise DomainError("holdout must contain at least one slide")

        registered = {s.slide_id for s in project.slides}
        pooled_dets: list[CircleAnnotation] = []
        pooled_gts: list[CircleAnnotation] = []
        offset = 0.0
        next_det_id = 1
        next_gt_id = 1
        for item in holdout:
            gts = parse_native_xml(Path(item.gt_xml).read_bytes())
            if gts.slide_id in registered:
                raise DomainError(f"holdout slide {gts.slide_id!r} is registered in the project; holdout must be disjoint")
            if item.dets_xml is not None:
                dets = parse_native_xml(Path(item.dets_xml).read_bytes())
            else:
                if loop.detector is None:
                    raise DomainError(f"loop {loop_index} has no detector to run on holdout slides")
                dets = detect(open_slide(item.slide), loop.detector)
            if dets.slide_id != gts.slide_id:
                raise DomainError(
                    f"holdout detections are for slide {dets.slide_id!r} but ground truth is {gts.slide_id!r}"
                )
            span = 1.0
            for a in tuple(dets.annotations) + tuple(gts.annotations):
                span = max(span, a.geometry.cx + a.geometry.r + 1.0)
            for a in dets.annotations:
                g = a.geometry
                pooled_dets.append(replace(a, id=next_det_id, geometry=Circle(g.cx + offset, g.cy, g.r)))
                next_det_id += 1
            for a in gts.annotations:
                g = a.geometry
                pooled_gts.append(replace(a, id=next_gt_id, geometry=Circle(g.cx + offset, g.cy, g.r)))
                next_gt_id += 1
            offset += span + 1.0

        report = average_precision(pooled_dets, pooled_gts, geometry_mode)
        _atomic_write(
            self._loop_dir(project_id, loop_index) / "evaluation.json", canonical_json(report.to_dict())
        )
        return report

    # -- summaries --------------------------------------------------------------

    def project_stats(self, project_id: str) -> dict:
        """Labor stats, per-slide curation diffs and label tallies."""
        project = self.get_project(project_id)
        diffs: dict[str, dict] = {}
        class_counts: dict[str, int] = {}
        for loop in project.loops:
            loop_diffs = {}
            for reg in project.slides:
                view = self.slide_view(project_id, reg.slide_id, loop.loop_index)
                machine = self._machine_set(project_id, loop.loop_index, reg.slide_id, view["threshold"])
                machine_kept = filter_by_threshold(machine, view["threshold"])
                curated = filter_by_threshold(view["set"], view["threshold"])
                d = diff_sets(machine_kept, curated)
                loop_diffs[reg.slide_id] = {
                    "added": d.added,
                    "deleted": d.deleted,
                    "moved": d.moved,
                    "unchanged": d.unchanged,
                }
                for rec in self.get_labels(project_id, reg.slide_id, loop.loop_index):
                    class_counts[rec.class_code] = class_counts.get(rec.class_code, 0) + 1
            diffs[str(loop.loop_index)] = loop_diffs
        return {
            "project_id": project_id,
            "timing": self.timing_stats(project_id),
            "curation_diffs": diffs,
            "class_counts": dict(sorted(class_counts.items())),
        }

    def _require_loop(self, project: Project, loop_index: int) -> LoopRecord:
        for loop in project.loops:
            if loop.loop_index == loop_index:
                return loop
        raise NotFoundError(f"project {project.project_id!r} has no loop {loop_index}")


def _report_from_dict(d: dict) -> EvaluationReport:
    from ..evaluation import PRPoint  # local import to keep module load light

    curves = {}
    for key, points in d.get("pr_curves", {}).items():
        curves[float(key)] = tuple(
            PRPoint(threshold=p["threshold"], precision=p["precision"], recall=p["recall"]) for p in points
        )
    return EvaluationReport(
        ap=d["ap"],
        ap50=d["ap50"],
        ap75=d["ap75"],
        ap_small=d.get("ap_small"),
        ap_medium=d.get("ap_medium"),
        ap_large=d.get("ap_large"),
        geometry_mode=GeometryMode(d.get("geometry_mode", "CIRCLE")),
        pr_curves=curves,
    )
