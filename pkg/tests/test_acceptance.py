"""Acceptance suite: one test per shipping criterion, each printing a
PASS/FAIL line (run with -s to stream them). Tolerances are pinned here and
nowhere else."""

import time
from contextlib import contextmanager
from datetime import datetime, timezone

import numpy as np
import pytest

import reference_eval
from eval_fixtures import detections_for, place_disjoint_gts, random_eval_fixture, to_reference
from conftest import random_annotation_set
from golden_fixtures import GOLDEN_DIR, GOLDEN_WRITERS
from loopcurate.detect import DetectorKind, DetectorSpec
from loopcurate.evaluation import (
    EvaluationReport,
    GeometryMode,
    average_precision,
    compare_loops,
    match_detections,
)
from loopcurate.formats import (
    PatchLabelRecord,
    import_imagescope_xml,
    load_class_config,
    parse_native_xml,
    read_patch_labels,
    save_class_config,
    write_imagescope_xml,
    write_native_xml,
    write_patch_labels,
)
from loopcurate.geometry import Circle, circle_iou
from loopcurate.model import (
    AnnotationEdit,
    AnnotationSet,
    CircleAnnotation,
    EditKind,
    Provenance,
    filter_by_threshold,
)
from loopcurate.service import ProjectStore, labor_reduction
from loopcurate.slides import open_slide, read_region
from loopcurate.synthetic import SynthSpec, make_synthetic_slide
from oracles import mc_circle_iou, mp_circle_iou
from golden_fixtures import random_label_records


@contextmanager
def criterion(name, budget_seconds=None):
    started = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL", flush=True)
        raise
    elapsed = time.monotonic() - started
    if budget_seconds is not None and elapsed > budget_seconds:
        print(f"ACCEPTANCE {name}: FAIL (took {elapsed:.1f}s, budget {budget_seconds}s)", flush=True)
        raise AssertionError(f"{name} exceeded runtime budget: {elapsed:.1f}s > {budget_seconds}s")
    print(f"ACCEPTANCE {name}: PASS ({elapsed:.1f}s)", flush=True)


def test_labor_reduction_arithmetic():
    with criterion("labor-reduction 7s->3s = 57.1%"):
        assert labor_reduction(7, 3) == pytest.approx(0.571, abs=1e-3)


def test_loop_gain_arithmetic_published_values():
    with criterion("loop gains 25.51% AP50 / 46.28% AP_S"):
        loop1 = EvaluationReport(ap=0.504, ap50=0.729, ap75=0.511, ap_small=0.363, ap_medium=0.721, ap_large=0.625)
        loop2 = EvaluationReport(ap=0.620, ap50=0.915, ap75=0.602, ap_small=0.531, ap_medium=0.756, ap_large=0.668)
        cmp = compare_loops(loop1, loop2)
        assert cmp.relative_gains["ap50"] == pytest.approx(0.2551, abs=0.001)
        assert cmp.relative_gains["ap_small"] == pytest.approx(0.4628, abs=0.001)


def test_ap_engine_against_independent_reference():
    with criterion("AP engine == brute-force reference (200 fixtures, 1e-9)", budget_seconds=60):
        rng = np.random.default_rng(2024)
        for trial in range(200):
            dets, gts = random_eval_fixture(rng, max_gts=15)
            mode = GeometryMode.CIRCLE if trial % 2 == 0 else GeometryMode.BOX
            report = average_precision(dets, gts, mode)
            ref = reference_eval.evaluate(*to_reference(dets, gts), geometry=mode.value.lower())
            for field in ("ap", "ap50", "ap75", "ap_small", "ap_medium", "ap_large"):
                mine, theirs = getattr(report, field), ref[field]
                if theirs is None:
                    assert mine is None, f"trial {trial}: {field} defined-ness mismatch"
                else:
                    assert abs(mine - theirs) < 1e-9, f"trial {trial}: {field} {mine} vs {theirs}"


def test_greedy_matching_equals_exhaustive_oracle():
    with criterion("greedy TP == exhaustive assignment (fixtures <= 6 objects)", budget_seconds=60):
        rng = np.random.default_rng(4096)
        for trial in range(300):
            n_gts = int(rng.integers(1, 4))
            gts = place_disjoint_gts(rng, n_gts, span=900)
            dets = detections_for(rng, gts, span=900)[: 6 - n_gts] if n_gts < 6 else []
            threshold = float(rng.choice([0.5, 0.55, 0.75, 0.95]))
            counts, _ = match_detections(dets, gts, threshold)
            ref_dets, ref_gts = to_reference(dets, gts)
            oracle = reference_eval.best_assignment_tp(ref_dets, ref_gts, threshold)
            assert counts.tp == oracle, f"trial {trial}: greedy {counts.tp} vs oracle {oracle}"


def test_ap_extremes():
    with criterion("AP extremes: perfect 1.0, empty 0.0"):
        gts = [
            CircleAnnotation(i, Circle(i * 400.0, 100.0, 15.0 + i * 12), Provenance.HUMAN_ADDED)
            for i in range(1, 9)
        ]
        perfect = [
            CircleAnnotation(a.id, a.geometry, Provenance.MACHINE, score=1.0) for a in gts
        ]
        report = average_precision(perfect, gts)
        assert report.ap == 1.0 and report.ap50 == 1.0 and report.ap75 == 1.0
        empty = average_precision([], gts)
        assert empty.ap == 0.0 and empty.ap50 == 0.0 and empty.ap75 == 0.0


def test_circle_iou_against_oracles():
    with criterion("circle IoU vs Monte Carlo 1e-2 and 50-digit lens 1e-9", budget_seconds=30):
        rng = np.random.default_rng(314)
        for i in range(100):
            r1, r2 = rng.uniform(3, 80, 2)
            c1 = (rng.uniform(50, 250), rng.uniform(50, 250), r1)
            c2 = (c1[0] + rng.uniform(-(r1 + r2), r1 + r2), c1[1] + rng.uniform(-(r1 + r2), r1 + r2), r2)
            analytic = circle_iou(Circle(*c1), Circle(*c2))
            assert abs(analytic - mc_circle_iou(c1, c2, seed=9000 + i)) < 1e-2, f"pair {i}"
            assert abs(analytic - mp_circle_iou(c1, c2)) < 1e-9, f"pair {i}"


def test_format_round_trips_and_golden_stability():
    with criterion("format round-trips (1000 instances) + golden bytes", budget_seconds=30):
        rng = np.random.default_rng(555)
        # native XML: 1000 annotations spread over 20 sets
        for _ in range(20):
            s = random_annotation_set(rng, 50, grid=True)
            assert parse_native_xml(write_native_xml(s)) == s
        # patch labels
        records = random_label_records(1000, seed=777)
        data = write_patch_labels(records)
        assert read_patch_labels(data) == tuple(records)
        assert write_patch_labels(read_patch_labels(data)) == data
        # class config round trips over random alphabets
        for trial in range(100):
            n = int(rng.integers(1, 12))
            keys = rng.choice(list("abcdefghijklmnopqrstuvwxyz0123456789"), size=n, replace=False)
            from loopcurate.formats import ClassConfig, ClassDef

            config = ClassConfig(
                tuple(ClassDef(str(k), f"C{idx}", f"Class {idx}") for idx, k in enumerate(keys)),
                version=str(trial),
            )
            assert load_class_config(save_class_config(config)) == config
        # ImageScope: geometry to 1e-4 px, scores exact
        for _ in range(10):
            anns = tuple(
                CircleAnnotation(
                    i + 1,
                    Circle(
                        float(rng.integers(10**4, 10**7)) / 10**3,
                        float(rng.integers(10**4, 10**7)) / 10**3,
                        float(rng.integers(10**3, 10**6)) / 10**3,
                    ),
                    Provenance.MACHINE,
                    score=int(rng.integers(0, 10**4 + 1)) / 10**4,
                )
                for i in range(50)
            )
            s = AnnotationSet("round", anns)
            back = import_imagescope_xml(write_imagescope_xml(s, 0.25))
            for a, b in zip(s.annotations, back.annotations):
                assert abs(a.geometry.cx - b.geometry.cx) <= 1e-4
                assert abs(a.geometry.cy - b.geometry.cy) <= 1e-4
                assert abs(a.geometry.r - b.geometry.r) <= 1e-4
                assert a.score == b.score
        # golden files: writers reproduce the committed bytes
        for name, writer in GOLDEN_WRITERS.items():
            assert writer() == (GOLDEN_DIR / name).read_bytes(), f"golden drift: {name}"


def test_threshold_semantics():
    with criterion("threshold: inclusive, monotone over 500 sets, humans kept", budget_seconds=10):
        boundary = AnnotationSet(
            "b",
            (
                CircleAnnotation(1, Circle(10, 10, 5), Provenance.MACHINE, score=0.5),
                CircleAnnotation(2, Circle(30, 30, 5), Provenance.MACHINE, score=0.4999),
            ),
        )
        kept = filter_by_threshold(boundary, 0.5)
        assert [a.id for a in kept.annotations] == [1]  # score == threshold survives

        rng = np.random.default_rng(808)
        for _ in range(500):
            s = random_annotation_set(rng, int(rng.integers(0, 25)))
            t1, t2 = sorted(rng.random(2))
            kept_lo = {a.id for a in filter_by_threshold(s, t1).annotations}
            kept_hi = {a.id for a in filter_by_threshold(s, t2).annotations}
            assert kept_hi <= kept_lo
            humans = {a.id for a in s.annotations if a.provenance is not Provenance.MACHINE}
            assert humans <= kept_hi


def test_end_to_end_synthetic_loop(tmp_path):
    with criterion("end-to-end loop on synth(seed 7, 50 disks)", budget_seconds=120):
        slide = make_synthetic_slide(
            SynthSpec(width=2048, height=2048, n_disks=50, radius_range=(20, 60), seed=7), tmp_path / "e2e"
        )
        store = ProjectStore(tmp_path / "root")
        config = load_class_config(b"g\tGDG\tGDG\no\tGOG\tGOG\n")
        project = store.create_project("E2E", config, [slide.path])
        pid = project.project_id

        store.start_loop(pid, DetectorSpec(kind=DetectorKind.BUILTIN_BLOB, params={}, version_tag="builtin-1"))
        sid = slide.ground_truth.slide_id
        store.set_threshold(pid, sid, 0.5)

        # detection quality: >= 90% of ground truth found at circle IoU >= 0.7
        view = store.slide_view(pid, sid)
        kept = filter_by_threshold(view["set"], 0.5)
        counts, _ = match_detections(kept.annotations, slide.ground_truth.annotations, 0.7)
        assert counts.tp >= 0.9 * len(slide.ground_truth.annotations), (
            f"only {counts.tp}/{len(slide.ground_truth.annotations)} disks found"
        )

        # scripted QA: delete one detection, add a circle, move another
        ids = [a.id for a in kept.annotations]
        store.submit_edits(
            pid,
            sid,
            [
                AnnotationEdit(EditKind.DELETE, target_id=ids[0]),
                AnnotationEdit(EditKind.ADD, circle=Circle(1024.0, 1024.0, 30.0)),
                AnnotationEdit(EditKind.MOVE, target_id=ids[1], circle=Circle(200.0, 200.0, 25.0)),
            ],
            0,
        )

        manifest = store.extract_slide_patches(pid, sid, 0.2)
        assert manifest.entries

        # every patch byte-equals the region read of its rectangle
        from PIL import Image

        handle = open_slide(slide.path)
        patch_dir = store._slide_dir(pid, 1, sid) / "patches"
        for entry in manifest.entries:
            x0, y0 = entry.origin
            expect = read_region(handle, 0, x0, y0, entry.size, entry.size).pixels
            got = np.asarray(Image.open(patch_dir / entry.patch_file))
            assert np.array_equal(got, expect), f"patch {entry.patch_file} diverges from region read"

        # label every patch, export, verify accounting identity
        now = datetime.now(timezone.utc)
        records = [
            PatchLabelRecord(e.patch_file, sid, e.annotation_id, "GOG" if i % 2 else "GDG", now, "dr-e2e")
            for i, e in enumerate(manifest.entries)
        ]
        store.put_labels(pid, sid, records)
        store.finalize_slide(pid, sid)
        export = store.export_training_set(pid, 1)
        assert sum(export.class_counts.values()) == len(records)
        assert export.class_counts["GDG"] == sum(1 for r in records if r.class_code == "GDG")
        assert export.class_counts["GOG"] == sum(1 for r in records if r.class_code == "GOG")


def test_crash_safety_100_randomized_trials(tmp_path):
    with criterion("crash during submit: pre/post state only (100 trials)", budget_seconds=120):
        slide = make_synthetic_slide(
            SynthSpec(width=512, height=512, n_disks=4, radius_range=(16, 28), seed=13), tmp_path / "cs"
        )
        store = ProjectStore(tmp_path / "root")
        config = load_class_config(b"g\tGDG\tGDG\n")
        project = store.create_project("Crash", config, [slide.path])
        pid, sid = project.project_id, slide.ground_truth.slide_id
        store.start_loop(pid, DetectorSpec(kind=DetectorKind.BUILTIN_BLOB, params={}, version_tag="b"))
        store.set_threshold(pid, sid, 0.0)
        log = store._slide_dir(pid, 1, sid) / "edits.jsonl"

        rng = np.random.default_rng(1337)
        trials = 0
        revision = 0
        while trials < 100:
            pre_view = store.slide_view(pid, sid)
            pre_bytes = log.read_bytes() if log.exists() else b""
            edits = [AnnotationEdit(EditKind.ADD, circle=Circle(float(rng.uniform(20, 490)), float(rng.uniform(20, 490)), 8.0))]
            if pre_view["set"].annotations and rng.random() < 0.4:
                victim = pre_view["set"].annotations[int(rng.integers(len(pre_view["set"].annotations)))].id
                edits.append(AnnotationEdit(EditKind.DELETE, target_id=victim))
            post_view = store.submit_edits(pid, sid, edits, revision)
            revision = post_view["revision"]
            full_bytes = log.read_bytes()

            # simulate the kill landing at random byte offsets of the append
            for cut in rng.integers(len(pre_bytes), len(full_bytes) + 1, size=10):
                cut = int(cut)
                log.write_bytes(full_bytes[:cut])
                recovered = store.slide_view(pid, sid)["set"]
                if cut == len(full_bytes):
                    assert recovered == post_view["set"], f"full log must replay to post-edit state"
                else:
                    assert recovered == pre_view["set"], f"cut at {cut}: partial batch leaked"
                trials += 1
            log.write_bytes(full_bytes)
