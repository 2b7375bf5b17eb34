import math

import numpy as np
import pytest

import reference_eval
from eval_fixtures import detections_for, place_disjoint_gts, random_eval_fixture, to_reference
from loopcurate.errors import DomainError, ValidationError
from loopcurate.evaluation import (
    IOU_GRID,
    EvaluationReport,
    GeometryMode,
    MatchCounts,
    average_precision,
    compare_loops,
    match_detections,
    precision_recall_curve,
)
from loopcurate.geometry import Circle
from loopcurate.model import CircleAnnotation, Provenance


def det(ann_id, cx, cy, r, score):
    return CircleAnnotation(ann_id, Circle(cx, cy, r), Provenance.MACHINE, score=score)


def gt(ann_id, cx, cy, r):
    return CircleAnnotation(ann_id, Circle(cx, cy, r), Provenance.HUMAN_ADDED)


class TestMatchDetections:
    def test_exact_match(self):
        gts = [gt(i, i * 300, 0, 50) for i in range(1, 6)]
        dets = [det(i, i * 300, 0, 50, 0.9) for i in range(1, 6)]
        counts, pairs = match_detections(dets, gts, 0.5)
        assert counts == MatchCounts(tp=5, fp=0, fn=0)
        assert all(p.iou == 1.0 for p in pairs)

    def test_no_detections(self):
        gts = [gt(1, 0, 0, 10), gt(2, 100, 0, 10)]
        counts, pairs = match_detections([], gts, 0.5)
        assert counts == MatchCounts(tp=0, fp=0, fn=2)
        assert pairs == ()

    def test_double_cover_hand_fixture(self):
        # two real objects, three detections: d1 and d2 both cover g1, d3 covers g2
        gts = [gt(1, 100, 100, 50), gt(2, 400, 100, 50)]
        dets = [
            det(1, 102, 100, 50, 0.95),  # strong hit on g1
            det(2, 108, 100, 52, 0.90),  # duplicate of g1
            det(3, 401, 100, 49, 0.80),  # hit on g2
        ]
        counts, pairs = match_detections(dets, gts, 0.5)
        assert counts == MatchCounts(tp=2, fp=1, fn=0)
        ref_dets, ref_gts = to_reference(dets, gts)
        assert counts.tp == reference_eval.best_assignment_tp(ref_dets, ref_gts, 0.5)
        assert {(p.detection_id, p.ground_truth_id) for p in pairs} == {(1, 1), (3, 2)}

    def test_sorts_internally_ties_by_id(self):
        gts = [gt(1, 0, 0, 50)]
        dets = [det(2, 0, 0, 50, 0.8), det(1, 3, 0, 50, 0.8)]
        _, pairs = match_detections(dets, gts, 0.5)
        # equal scores: id 1 ranks first and takes the gt
        assert pairs[0].detection_id == 1

    def test_equal_iou_prefers_lower_gt_id(self):
        gts = [gt(2, 100, 0, 50), gt(1, -100, 0, 50)]
        dets = [det(1, 0, 0, 150, 0.9)]
        _, pairs = match_detections(dets, gts, 0.0)
        assert pairs[0].ground_truth_id == 1

    def test_greedy_equals_exhaustive_on_small_disjoint_fixtures(self):
        rng = np.random.default_rng(17)
        for trial in range(150):
            gts = place_disjoint_gts(rng, int(rng.integers(1, 4)), span=800)
            dets = detections_for(rng, gts, span=800)[:3]
            threshold = float(rng.choice(IOU_GRID))
            counts, _ = match_detections(dets, gts, threshold)
            ref_dets, ref_gts = to_reference(dets, gts)
            assert counts.tp == reference_eval.best_assignment_tp(ref_dets, ref_gts, threshold)

    def test_greedy_never_exceeds_optimal_even_with_overlapping_gts(self):
        rng = np.random.default_rng(23)
        for trial in range(100):
            gts = [gt(i + 1, rng.uniform(0, 300), rng.uniform(0, 300), rng.uniform(20, 120)) for i in range(3)]
            dets = [
                det(i + 1, rng.uniform(0, 300), rng.uniform(0, 300), rng.uniform(20, 120), round(rng.random(), 3))
                for i in range(3)
            ]
            threshold = 0.3
            counts, _ = match_detections(dets, gts, threshold)
            ref_dets, ref_gts = to_reference(dets, gts)
            assert counts.tp <= reference_eval.best_assignment_tp(ref_dets, ref_gts, threshold)


class TestPrecisionRecallCurve:
    def test_perfect_detections(self):
        gts = [gt(i, i * 300, 0, 40) for i in range(1, 4)]
        dets = [det(i, i * 300, 0, 40, 1.0) for i in range(1, 4)]
        points = precision_recall_curve(dets, gts, 0.5)
        assert len(points) == 1
        assert points[0].precision == 1.0
        assert points[0].recall == 1.0

    def test_all_wrong(self):
        gts = [gt(1, 0, 0, 10)]
        dets = [det(i, 5000 + i * 100, 0, 10, 1 - i * 0.1) for i in range(1, 4)]
        points = precision_recall_curve(dets, gts, 0.5)
        assert all(p.precision == 0.0 for p in points)

    def test_hand_computed_table_5_dets_3_gts(self):
        gts = [gt(1, 100, 0, 40), gt(2, 400, 0, 40), gt(3, 700, 0, 40)]
        dets = [
            det(1, 100, 0, 40, 0.95),   # TP (g1)
            det(2, 2000, 0, 40, 0.90),  # FP
            det(3, 400, 0, 40, 0.80),   # TP (g2)
            det(4, 2500, 0, 40, 0.70),  # FP
            det(5, 700, 0, 40, 0.60),   # TP (g3)
        ]
        points = precision_recall_curve(dets, gts, 0.5)
        expected = [
            (0.95, 1 / 1, 1 / 3),
            (0.90, 1 / 2, 1 / 3),
            (0.80, 2 / 3, 2 / 3),
            (0.70, 2 / 4, 2 / 3),
            (0.60, 3 / 5, 3 / 3),
        ]
        assert [(p.threshold, p.precision, p.recall) for p in points] == expected

    def test_recall_non_decreasing_random(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            dets, gts = random_eval_fixture(rng, max_gts=10)
            points = precision_recall_curve(dets, gts, 0.5)
            recalls = [p.recall for p in points]
            assert recalls == sorted(recalls)
            assert all(0 <= p.precision <= 1 for p in points)

    def test_empty_gts_rejected(self):
        with pytest.raises(DomainError, match="undefined recall"):
            precision_recall_curve([det(1, 0, 0, 10, 0.5)], [], 0.5)

    def test_distinct_scores_collapse_ties(self):
        gts = [gt(1, 0, 0, 40), gt(2, 300, 0, 40)]
        dets = [det(1, 0, 0, 40, 0.7), det(2, 300, 0, 40, 0.7)]
        points = precision_recall_curve(dets, gts, 0.5)
        assert len(points) == 1
        assert (points[0].threshold, points[0].precision, points[0].recall) == (0.7, 1.0, 1.0)


class TestAveragePrecision:
    def test_perfect_is_all_ones(self):
        gts = [gt(i, i * 300, 0, 20 + i * 10) for i in range(1, 6)]
        dets = [det(i, i * 300, 0, 20 + i * 10, 1.0) for i in range(1, 6)]
        report = average_precision(dets, gts)
        assert report.ap == 1.0
        assert report.ap50 == 1.0
        assert report.ap75 == 1.0
        for field in (report.ap_small, report.ap_medium, report.ap_large):
            assert field is None or field == 1.0

    def test_empty_dets_is_zero(self):
        gts = [gt(1, 0, 0, 10), gt(2, 100, 0, 60)]
        report = average_precision([], gts)
        assert report.ap == 0.0 and report.ap50 == 0.0 and report.ap75 == 0.0
        # r=10 -> area 314 (small); r=60 -> 11310 (large); medium empty
        assert report.ap_small == 0.0
        assert report.ap_medium is None
        assert report.ap_large == 0.0

    def test_empty_gts_rejected(self):
        with pytest.raises(DomainError):
            average_precision([det(1, 0, 0, 10, 0.5)], [])

    def test_matches_reference_on_random_fixtures(self):
        rng = np.random.default_rng(101)
        for trial in range(60):
            dets, gts = random_eval_fixture(rng, max_gts=15)
            mode = GeometryMode.CIRCLE if trial % 2 == 0 else GeometryMode.BOX
            report = average_precision(dets, gts, mode)
            ref = reference_eval.evaluate(*to_reference(dets, gts), geometry=mode.value.lower())
            for field in ("ap", "ap50", "ap75", "ap_small", "ap_medium", "ap_large"):
                mine, theirs = getattr(report, field), ref[field]
                if theirs is None:
                    assert mine is None, field
                else:
                    assert mine == pytest.approx(theirs, abs=1e-9), field

    def test_ap_non_increasing_in_iou_threshold(self):
        rng = np.random.default_rng(55)
        from loopcurate.evaluation import _ap_at, ranked_detections

        for _ in range(25):
            dets, gts = random_eval_fixture(rng, max_gts=12)
            ranked = ranked_detections(dets)
            values = [
                _ap_at(ranked, gts, t, GeometryMode.CIRCLE, (0.0, math.inf)) for t in IOU_GRID
            ]
            for a, b in zip(values, values[1:]):
                assert a >= b - 1e-12
        # the report-level consequence
        report = average_precision(dets, gts)
        assert report.ap50 >= report.ap75

    def test_score_scale_invariance(self):
        rng = np.random.default_rng(77)
        dets, gts = random_eval_fixture(rng, max_gts=10)
        squashed = [
            CircleAnnotation(a.id, a.geometry, a.provenance, score=round(a.score**3, 6))
            for a in dets
        ]
        base = average_precision(dets, gts)
        warped = average_precision(squashed, gts)
        for field in ("ap", "ap50", "ap75", "ap_small", "ap_medium", "ap_large"):
            assert getattr(base, field) == getattr(warped, field)

    def test_duplicate_lower_scored_detection_never_raises_ap(self):
        rng = np.random.default_rng(88)
        for _ in range(20):
            dets, gts = random_eval_fixture(rng, max_gts=8)
            target = gts[0].geometry
            # make sure the target is already matched, then duplicate it lower
            next_id = max((a.id for a in dets), default=0) + 1
            sure_hit = CircleAnnotation(next_id, target, Provenance.MACHINE, score=0.999)
            dup = CircleAnnotation(
                next_id + 1,
                Circle(target.cx + 1, target.cy, target.r),
                Provenance.MACHINE,
                score=0.01,
            )
            base = average_precision(list(dets) + [sure_hit], gts)
            with_dup = average_precision(list(dets) + [sure_hit, dup], gts)
            assert with_dup.ap <= base.ap + 1e-12

    def test_human_detections_rank_as_full_confidence(self):
        gts = [gt(1, 0, 0, 40)]
        curated = [CircleAnnotation(1, Circle(0, 0, 40), Provenance.HUMAN_ADDED)]
        report = average_precision(curated, gts)
        assert report.ap == 1.0


class TestEvaluationReport:
    def test_invariant_ap50_ge_ap75(self):
        with pytest.raises(ValidationError):
            EvaluationReport(ap=0.5, ap50=0.4, ap75=0.6, ap_small=None, ap_medium=None, ap_large=None)

    def test_range_checks(self):
        with pytest.raises(ValidationError):
            EvaluationReport(ap=1.5, ap50=1.0, ap75=1.0, ap_small=None, ap_medium=None, ap_large=None)

    def test_to_dict_round_trips_fields(self):
        report = EvaluationReport(ap=0.5, ap50=0.7, ap75=0.4, ap_small=None, ap_medium=0.3, ap_large=0.9)
        d = report.to_dict()
        assert d["ap_small"] is None and d["ap_medium"] == 0.3
        assert d["geometry_mode"] == "CIRCLE"


class TestCompareLoops:
    def table1(self, loop):
        values = {
            1: dict(ap=0.504, ap50=0.729, ap75=0.511, ap_small=0.363, ap_medium=0.721, ap_large=0.625),
            2: dict(ap=0.620, ap50=0.915, ap75=0.602, ap_small=0.531, ap_medium=0.756, ap_large=0.668),
        }[loop]
        return EvaluationReport(**values)

    def test_equal_reports_zero_deltas(self):
        r = self.table1(1)
        cmp = compare_loops(r, r)
        assert all(v == 0 for v in cmp.deltas.values())
        assert all(v == 0 for v in cmp.relative_gains.values())

    def test_published_loop_gains(self):
        cmp = compare_loops(self.table1(1), self.table1(2))
        assert cmp.relative_gains["ap_small"] == pytest.approx(0.4628, abs=5e-4)
        assert cmp.relative_gains["ap50"] == pytest.approx(0.2551, abs=5e-4)

    def test_geometry_mode_mismatch(self):
        a = self.table1(1)
        b = EvaluationReport(
            ap=0.6, ap50=0.9, ap75=0.6, ap_small=None, ap_medium=None, ap_large=None,
            geometry_mode=GeometryMode.BOX,
        )
        with pytest.raises(DomainError):
            compare_loops(a, b)

    def test_undefined_fields_propagate_none(self):
        a = EvaluationReport(ap=0.5, ap50=0.5, ap75=0.5, ap_small=None, ap_medium=0.5, ap_large=0.5)
        b = EvaluationReport(ap=0.6, ap50=0.6, ap75=0.6, ap_small=0.4, ap_medium=0.6, ap_large=0.6)
        cmp = compare_loops(a, b)
        assert cmp.deltas["ap_small"] is None
        assert cmp.relative_gains["ap_small"] is None
        assert cmp.deltas["ap"] == pytest.approx(0.1)
