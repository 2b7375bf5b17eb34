"""Workflow hub: project persistence, loop lifecycle, labor analytics and the
HTTP API consumed by the CLI and the QA UI."""

from .store import (
    HoldoutItem,
    LoopRecord,
    Project,
    ProjectStore,
    SlideRegistration,
    Stage,
    TimingMode,
    TimingSample,
    TrainingExport,
    active_seconds_from_events,
    labor_reduction,
)

__all__ = [
    "ProjectStore",
    "Project",
    "LoopRecord",
    "SlideRegistration",
    "Stage",
    "TimingMode",
    "TimingSample",
    "TrainingExport",
    "HoldoutItem",
    "labor_reduction",
    "active_seconds_from_events",
]
