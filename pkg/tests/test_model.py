import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loopcurate.errors import DomainError, NotFoundError, ValidationError
from loopcurate.geometry import Circle
from loopcurate.model import (
    AnnotationEdit,
    AnnotationSet,
    CircleAnnotation,
    Direction,
    EditKind,
    EditLog,
    Provenance,
    apply_edit,
    apply_edits,
    diff_sets,
    filter_by_threshold,
    is_kept,
    kept_annotations,
    replay_log,
    step_threshold,
)

from conftest import random_annotation_set


def machine(ann_id, score, cx=0.0, cy=0.0, r=10.0):
    return CircleAnnotation(ann_id, Circle(cx + ann_id * 100, cy, r), Provenance.MACHINE, score=score)


def human(ann_id, cx=0.0, cy=0.0, r=10.0):
    return CircleAnnotation(ann_id, Circle(cx + ann_id * 100, cy, r), Provenance.HUMAN_ADDED)


@st.composite
def annotation_sets(draw, max_size=20):
    n = draw(st.integers(min_value=0, max_value=max_size))
    anns = []
    for i in range(n):
        prov = draw(st.sampled_from(list(Provenance)))
        if prov is Provenance.MACHINE:
            score = draw(st.floats(min_value=0, max_value=1, allow_nan=False))
        elif prov is Provenance.HUMAN_EDITED:
            score = draw(st.one_of(st.none(), st.floats(min_value=0, max_value=1, allow_nan=False)))
        else:
            score = None
        anns.append(
            CircleAnnotation(
                id=i + 1,
                geometry=Circle(
                    draw(st.floats(min_value=0, max_value=5000, allow_nan=False)),
                    draw(st.floats(min_value=0, max_value=5000, allow_nan=False)),
                    draw(st.floats(min_value=0.5, max_value=200, allow_nan=False)),
                ),
                provenance=prov,
                score=score,
            )
        )
    return AnnotationSet("hyp", tuple(anns), draw(st.floats(min_value=0, max_value=1, allow_nan=False)))


class TestFilterByThreshold:
    def test_inclusive_boundary(self):
        s = AnnotationSet("s", (machine(1, 0.2), machine(2, 0.5), machine(3, 0.9)))
        kept = filter_by_threshold(s, 0.5)
        assert [a.score for a in kept.annotations] == [0.5, 0.9]
        assert kept.active_threshold == 0.5

    def test_threshold_zero_keeps_all(self):
        s = AnnotationSet("s", (machine(1, 0.0), machine(2, 0.31), human(3)))
        assert len(filter_by_threshold(s, 0.0)) == 3

    def test_human_survives_any_threshold(self):
        s = AnnotationSet("s", (human(1), machine(2, 0.1)))
        kept = filter_by_threshold(s, 0.9)
        assert [a.id for a in kept.annotations] == [1]
        assert kept.annotations[0].provenance is Provenance.HUMAN_ADDED

    def test_order_and_ids_preserved(self):
        s = AnnotationSet("s", (machine(5, 0.9), human(2), machine(9, 0.8)))
        kept = filter_by_threshold(s, 0.5)
        assert [a.id for a in kept.annotations] == [5, 2, 9]

    @pytest.mark.parametrize("bad", [-0.1, 1.1, 2.0])
    def test_out_of_range_threshold(self, bad):
        with pytest.raises(DomainError):
            filter_by_threshold(AnnotationSet("s"), bad)

    @given(annotation_sets(), st.floats(min_value=0, max_value=1), st.floats(min_value=0, max_value=1))
    def test_monotone_subset(self, s, t1, t2):
        lo, hi = min(t1, t2), max(t1, t2)
        kept_hi = {a.id for a in filter_by_threshold(s, hi).annotations}
        kept_lo = {a.id for a in filter_by_threshold(s, lo).annotations}
        assert kept_hi <= kept_lo

    @given(annotation_sets(), st.floats(min_value=0, max_value=1))
    def test_human_persistence(self, s, t):
        kept_ids = {a.id for a in filter_by_threshold(s, t).annotations}
        for a in s.annotations:
            if a.provenance in (Provenance.HUMAN_ADDED, Provenance.HUMAN_EDITED):
                assert a.id in kept_ids


class TestStepThreshold:
    def test_up(self):
        s = AnnotationSet("s", (), 0.90)
        assert step_threshold(s, Direction.UP, 0.05).active_threshold == pytest.approx(0.95)

    def test_up_clamps_at_one(self):
        s = AnnotationSet("s", (), 0.98)
        assert step_threshold(s, Direction.UP, 0.05).active_threshold == 1.0

    def test_down_clamps_at_zero(self):
        s = AnnotationSet("s", (), 0.02)
        assert step_threshold(s, Direction.DOWN, 0.05).active_threshold == 0.0

    def test_step_must_be_positive(self):
        with pytest.raises(DomainError):
            step_threshold(AnnotationSet("s"), Direction.UP, 0.0)

    def test_down_twice_grows_kept_set(self):
        rng = np.random.default_rng(20)
        s = random_annotation_set(rng, 20)
        s = AnnotationSet(s.slide_id, s.annotations, 0.50)
        once = step_threshold(s, Direction.DOWN, 0.05)
        twice = step_threshold(once, Direction.DOWN, 0.05)
        assert twice.active_threshold == pytest.approx(0.40)
        chain = [
            {a.id for a in kept_annotations(stage)}
            for stage in (s, once, twice)
        ]
        assert chain[0] <= chain[1] <= chain[2]
        # stepping retains the full set so hidden detections can come back
        assert len(twice.annotations) == len(s.annotations)

    def test_matches_filter_semantics_at_new_value(self):
        rng = np.random.default_rng(21)
        s = random_annotation_set(rng, 15)
        s = AnnotationSet(s.slide_id, s.annotations, 0.60)
        stepped = step_threshold(s, Direction.UP, 0.05)
        materialized = filter_by_threshold(s, stepped.active_threshold)
        assert kept_annotations(stepped) == materialized.annotations


class TestApplyEdit:
    def test_delete_only_annotation(self):
        s = AnnotationSet("s", (machine(1, 0.7),))
        out = apply_edit(s, AnnotationEdit(EditKind.DELETE, target_id=1))
        assert len(out) == 0

    def test_add_to_empty(self):
        out = apply_edit(AnnotationSet("s"), AnnotationEdit(EditKind.ADD, circle=Circle(100, 100, 40)))
        assert len(out) == 1
        a = out.annotations[0]
        assert a.id == 1
        assert a.provenance is Provenance.HUMAN_ADDED
        assert a.score is None
        assert a.geometry == Circle(100, 100, 40)

    def test_add_assigns_max_plus_one(self):
        s = AnnotationSet("s", (machine(4, 0.5), machine(9, 0.5)))
        out = apply_edit(s, AnnotationEdit(EditKind.ADD, circle=Circle(1, 1, 1)))
        assert out.annotations[-1].id == 10

    def test_move_marks_human_edited_and_keeps_score(self):
        s = AnnotationSet("s", (machine(1, 0.66),))
        out = apply_edit(s, AnnotationEdit(EditKind.MOVE, target_id=1, circle=Circle(5, 5, 10)))
        a = out.annotations[0]
        assert a.provenance is Provenance.HUMAN_EDITED
        assert a.score == 0.66
        assert a.geometry == Circle(5, 5, 10)

    def test_resize_on_human_added_stays_human_added(self):
        s = AnnotationSet("s", (human(1),))
        out = apply_edit(s, AnnotationEdit(EditKind.RESIZE, target_id=1, circle=Circle(100, 0, 99)))
        assert out.annotations[0].provenance is Provenance.HUMAN_ADDED

    def test_reclassify_sets_label_only(self):
        s = AnnotationSet("s", (machine(1, 0.9),))
        out = apply_edit(s, AnnotationEdit(EditKind.RECLASSIFY, target_id=1, class_label="GOG"))
        a = out.annotations[0]
        assert a.class_label == "GOG"
        assert a.provenance is Provenance.MACHINE
        assert a.geometry == s.annotations[0].geometry

    def test_other_annotations_untouched(self):
        s = AnnotationSet("s", (machine(1, 0.9), machine(2, 0.8)))
        out = apply_edit(s, AnnotationEdit(EditKind.DELETE, target_id=1))
        assert out.annotations == (s.annotations[1],)

    def test_unknown_target(self):
        with pytest.raises(NotFoundError):
            apply_edit(AnnotationSet("s"), AnnotationEdit(EditKind.DELETE, target_id=42))

    def test_malformed_payloads_rejected_at_construction(self):
        with pytest.raises(ValidationError):
            AnnotationEdit(EditKind.ADD, target_id=3, circle=Circle(0, 0, 1))
        with pytest.raises(ValidationError):
            AnnotationEdit(EditKind.MOVE, target_id=1)
        with pytest.raises(ValidationError):
            AnnotationEdit(EditKind.RECLASSIFY, target_id=1)
        with pytest.raises(ValidationError):
            AnnotationEdit(EditKind.DELETE)


class TestReplay:
    def build_fixture(self):
        base = AnnotationSet(
            "s",
            (machine(1, 0.9, r=20.0), machine(2, 0.6, r=20.0), machine(3, 0.4, r=20.0)),
        )
        edits = (
            AnnotationEdit(EditKind.DELETE, target_id=3),
            # after the delete, max id is 2, so this ADD takes id 3
            AnnotationEdit(EditKind.ADD, circle=Circle(700, 0, 25)),
            AnnotationEdit(EditKind.MOVE, target_id=2, circle=Circle(210, 5, 20)),
            AnnotationEdit(EditKind.RECLASSIFY, target_id=1, class_label="GDG"),
            AnnotationEdit(EditKind.RESIZE, target_id=3, circle=Circle(700, 0, 30)),
        )
        return base, EditLog("s", edits)

    def test_five_edit_replay_equals_hand_built(self):
        base, log = self.build_fixture()
        result = replay_log(base, log)
        expected = AnnotationSet(
            "s",
            (
                CircleAnnotation(1, Circle(100, 0, 20), Provenance.MACHINE, score=0.9, class_label="GDG"),
                CircleAnnotation(2, Circle(210, 5, 20), Provenance.HUMAN_EDITED, score=0.6),
                CircleAnnotation(3, Circle(700, 0, 30), Provenance.HUMAN_ADDED),
            ),
        )
        assert result == expected

    def test_replay_deterministic(self):
        base, log = self.build_fixture()
        assert replay_log(base, log) == replay_log(base, log)

    def test_replay_rejects_wrong_slide(self):
        base, log = self.build_fixture()
        with pytest.raises(DomainError):
            replay_log(AnnotationSet("other"), log)

    def test_log_append_only(self):
        log = EditLog("s")
        log2 = log.append(AnnotationEdit(EditKind.ADD, circle=Circle(1, 1, 1)))
        assert len(log.edits) == 0 and len(log2.edits) == 1


class TestDiffSets:
    def test_identical(self):
        rng = np.random.default_rng(5)
        s = random_annotation_set(rng, 10)
        d = diff_sets(s, s)
        assert (d.added, d.deleted, d.moved, d.unchanged) == (0, 0, 0, 10)

    def test_one_deleted(self):
        s = AnnotationSet("s", (machine(1, 0.5), machine(2, 0.5)))
        curated = AnnotationSet("s", (s.annotations[0],))
        d = diff_sets(s, curated)
        assert (d.added, d.deleted, d.moved, d.unchanged) == (0, 1, 0, 1)

    def test_add_delete_move_partition(self):
        n = 5
        anns = tuple(machine(i + 1, 0.5) for i in range(n))
        s = AnnotationSet("s", anns)
        curated = apply_edits(
            s,
            (
                AnnotationEdit(EditKind.DELETE, target_id=2),
                AnnotationEdit(EditKind.MOVE, target_id=3, circle=Circle(305, 4, 10)),
                AnnotationEdit(EditKind.ADD, circle=Circle(999, 0, 12)),
            ),
        )
        d = diff_sets(s, curated)
        assert (d.added, d.deleted, d.moved, d.unchanged) == (1, 1, 1, n - 2)
        assert d.added + d.deleted + d.moved + d.unchanged == n + 1  # union of ids

    def test_slide_mismatch(self):
        with pytest.raises(DomainError):
            diff_sets(AnnotationSet("a"), AnnotationSet("b"))


class TestInvariants:
    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValidationError):
            AnnotationSet("s", (machine(1, 0.5), machine(1, 0.6)))

    def test_machine_requires_score(self):
        with pytest.raises(ValidationError):
            CircleAnnotation(1, Circle(0, 0, 1), Provenance.MACHINE)

    def test_human_added_must_not_score(self):
        with pytest.raises(ValidationError):
            CircleAnnotation(1, Circle(0, 0, 1), Provenance.HUMAN_ADDED, score=0.5)

    def test_score_range(self):
        with pytest.raises(ValidationError):
            CircleAnnotation(1, Circle(0, 0, 1), Provenance.MACHINE, score=1.5)

    def test_human_edited_score_optional(self):
        CircleAnnotation(1, Circle(0, 0, 1), Provenance.HUMAN_EDITED, score=0.5)
        CircleAnnotation(2, Circle(0, 0, 1), Provenance.HUMAN_EDITED)

    @given(annotation_sets(), st.floats(min_value=0, max_value=1))
    @settings(max_examples=50)
    def test_is_kept_matches_filter(self, s, t):
        direct = {a.id for a in s.annotations if is_kept(a, t)}
        assert direct == {a.id for a in filter_by_threshold(s, t).annotations}
