#!/usr/bin/env python3
"""End-to-end demo: two human-in-the-loop iterations on synthetic slides.

Loop 1 runs a deliberately weakened detector, loop 2 the proper one; both are
evaluated against the same held-out slide so the loop-over-loop gain is
visible, mirroring the intended workflow at desk scale.

Usage: python3 scripts/run_demo_loop.py [workdir]
"""

import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

from loopcurate.detect import DetectorKind, DetectorSpec
from loopcurate.evaluation import compare_loops
from loopcurate.formats import PatchLabelRecord, load_class_config, write_native_xml
from loopcurate.geometry import Circle
from loopcurate.model import AnnotationEdit, EditKind
from loopcurate.service import HoldoutItem, ProjectStore, TimingMode, TimingSample
from loopcurate.synthetic import SynthSpec, make_synthetic_slide

CLASS_CONFIG = b"g\tGDG\tGlobal Disappearing Glomerulosclerosis\no\tGOG\tGlobal Obsolescent Glomerulosclerosis\n"


def detector(intensity):
    return DetectorSpec(
        kind=DetectorKind.BUILTIN_BLOB,
        params={"intensity_threshold": intensity},
        version_tag=f"builtin-thr{intensity:g}",
    )


def curate_loop(store, pid, slide_ids, threshold):
    """Scripted stand-in for the pathologist: filter, one edit pass, finalize."""
    for sid in slide_ids:
        store.set_threshold(pid, sid, threshold)
        view = store.slide_view(pid, sid)
        edits = [AnnotationEdit(EditKind.ADD, circle=Circle(128.0, 128.0, 22.0))]
        if view["set"].annotations:
            edits.append(AnnotationEdit(EditKind.DELETE, target_id=view["set"].annotations[0].id))
        store.submit_edits(pid, sid, edits, view["revision"])
        manifest = store.extract_slide_patches(pid, sid)
        now = datetime.now(timezone.utc)
        labels = [
            PatchLabelRecord(e.patch_file, sid, e.annotation_id, "GOG" if i % 2 else "GDG", now, "demo")
            for i, e in enumerate(manifest.entries)
        ]
        if labels:
            store.put_labels(pid, sid, labels)
        store.finalize_slide(pid, sid)


def main(workdir: Path) -> None:
    print(f"workspace: {workdir}")
    slides = [
        make_synthetic_slide(
            SynthSpec(width=1024, height=1024, n_disks=16, radius_range=(18, 42), seed=s, slide_id=f"demo-{s}"),
            workdir / f"slide-{s}",
        )
        for s in (1, 2)
    ]
    holdout = make_synthetic_slide(
        SynthSpec(width=1024, height=1024, n_disks=14, radius_range=(18, 42), seed=9, slide_id="demo-holdout"),
        workdir / "holdout",
    )
    gt_xml = workdir / "holdout_gt.xml"
    gt_xml.write_bytes(write_native_xml(holdout.ground_truth))

    store = ProjectStore(workdir / "projects")
    project = store.create_project("Demo Study", load_class_config(CLASS_CONFIG), [s.path for s in slides])
    pid = project.project_id
    slide_ids = [s.ground_truth.slide_id for s in slides]

    reports = []
    for loop_index, intensity in ((1, 75.0), (2, 200.0)):
        store.start_loop(pid, detector(intensity))
        curate_loop(store, pid, slide_ids, threshold=0.5)
        report = store.evaluate_loop(pid, loop_index, [HoldoutItem(gt_xml=gt_xml, slide=holdout.path)])
        store.export_training_set(pid, loop_index)
        reports.append(report)
        print(
            f"loop {loop_index} (intensity {intensity:g}): "
            f"AP {report.ap:.3f}  AP50 {report.ap50:.3f}  AP75 {report.ap75:.3f}"
        )

    gains = compare_loops(reports[0], reports[1])
    if gains.relative_gains["ap"] is not None:
        print(f"loop 2 vs loop 1: AP {gains.relative_gains['ap'] * +100:.1f}% relative gain")

    store.record_timing(pid, TimingSample(slide_ids[0], 2, TimingMode.PURE_MANUAL, 100, 700.0))
    store.record_timing(pid, TimingSample(slide_ids[0], 2, TimingMode.ASSISTED, 100, 300.0))
    stats = store.project_stats(pid)
    timing = stats["timing"]
    print(
        f"labor: manual {timing['seconds_per_object']['PURE_MANUAL']:.1f} s/obj, "
        f"assisted {timing['seconds_per_object']['ASSISTED']:.1f} s/obj, "
        f"reduction {timing['labor_reduction'] * 100:.1f}%"
    )
    print(f"label tallies: {stats['class_counts']}")


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="loopcurate-demo-"))
    main(target)
