import math

import numpy as np
import pytest

from datkit.dataio import AnnotationRecord, Frame, from_frames
from datkit.engine import (
    DatEngine,
    DatParams,
    EngineError,
    RunMode,
    Source,
    UnusableBaselineError,
    dat_run,
)
from datkit.geometry import BoundingBox, Category
from datkit.rng import SplitMix64

from reference_engine import (
    BehaviorScript,
    ScriptedDetector,
    ScriptedTracker,
    random_script,
    reference_trace,
    tiny_sequence,
)

B = BoundingBox(10, 10, 20, 20)


def perfect_script(n):
    return BehaviorScript(
        detections=[B] * n, tracker_fails=[False] * n, tracker_boxes=[B] * n
    )


def run_engine(script, params, n):
    seq = tiny_sequence(n)
    detector = ScriptedDetector(script)
    trace = dat_run(seq, detector, lambda: ScriptedTracker(script), params, RunMode.DAT)
    return trace


def sources(trace):
    return "".join(
        {"DETECTOR": "D", "TRACKER": "T", "NONE": "-"}[o.source.value] for o in trace
    )


class TestStateMachine:
    def test_perfect_components_follow_cycle(self):
        # R=4, C=2, K=3 over 10 frames: two detections initialize, four
        # tracked frames, scheduled reset, re-acquire, track again
        params = DatParams(4, 2, 3)
        trace = run_engine(perfect_script(10), params, 10)
        assert sources(trace) == "DDTTTTDDTT"

    def test_always_missing_detector_goes_disabled(self):
        n = 8
        script = BehaviorScript([None] * n, [False] * n, [B] * n)
        trace = run_engine(script, DatParams(100, 2, 3), n)
        called = [o.frame_index for o in trace if o.detector_called]
        assert called == [0, 1, 4, 7]
        assert all(o.source is Source.NONE and o.box is None for o in trace)

    def test_tracker_failure_engages_detector_same_frame(self):
        n = 6
        fails = [False] * n
        fails[4] = True
        script = BehaviorScript([B] * n, fails, [B] * n)
        trace = run_engine(script, DatParams(100, 1, 5), n)
        failing = trace[4]
        assert failing.detector_called and failing.tracker_updated
        assert failing.source in (Source.DETECTOR, Source.NONE)
        assert failing.source is not Source.TRACKER

    def test_inconsistent_detections_restart_streak(self):
        far = BoundingBox(500, 500, 20, 20)
        # detections alternate between two disjoint spots: IOU chain breaks
        dets = [B, far, B, far, B, B]
        script = BehaviorScript(dets, [False] * 6, [B] * 6)
        trace = run_engine(script, DatParams(100, 2, 5), 6)
        # every alternation resets the streak to 1; it completes only on
        # the first consecutive pair (frames 4+5), so tracking starts after 5
        assert sources(trace) == "DDDDDD"
        assert [o.state_after for o in trace[:5]] == ["acquiring"] * 5
        assert trace[5].state_after == "tracking"

    def test_overlap_threshold_respected(self):
        nudged = BoundingBox(12, 10, 20, 20)  # IOU with B well above 0.1
        script = BehaviorScript([B, nudged], [False] * 2, [B] * 2)
        trace = run_engine(script, DatParams(100, 2, 5), 2)
        assert trace[1].state_after == "tracking"

    def test_disabled_check_cadence_and_reacquire(self):
        n = 12
        dets = [None] * n
        dets[7] = B  # found at the second disabled check (idle 3 and 6... K=3)
        script = BehaviorScript(dets, [False] * n, [B] * n)
        trace = run_engine(script, DatParams(100, 2, 3), n)
        called = [o.frame_index for o in trace if o.detector_called]
        # 0,1 acquiring; disabled after frame 1; checks at idle=3,6 -> frames 4,7
        assert called[:3] == [0, 1, 4]
        assert trace[7].source is Source.DETECTOR
        assert trace[7].state_after == "acquiring"

    def test_c_equal_one_inits_immediately_from_disabled(self):
        n = 6
        dets = [None, None, None, B, B, B]
        script = BehaviorScript(dets, [False] * n, [B] * n)
        trace = run_engine(script, DatParams(100, 1, 3), n)
        # C=1: single miss disables at frame 0; check at frame 3 hits -> tracking
        assert trace[0].state_after == "disabled"
        assert trace[3].source is Source.DETECTOR
        assert trace[3].state_after == "tracking"
        assert trace[4].source is Source.TRACKER

    def test_tracker_init_failure_is_engine_error(self):
        class FailingTracker(ScriptedTracker):
            def init(self, frame, box):
                raise ValueError("degenerate box")

        seq = tiny_sequence(3)
        script = perfect_script(3)
        engine = DatEngine(
            ScriptedDetector(script), lambda: FailingTracker(script), DatParams(10, 1, 3)
        )
        with pytest.raises(EngineError, match="frame 0"):
            for frame in seq.iter_frames():
                engine.step(frame)

    def test_single_source_invariant_random(self):
        rng = SplitMix64(12)
        for trial in range(20):
            n = 60
            script = random_script(rng, n)
            params = DatParams(
                1 + int(rng.uniform() * 10),
                1 + int(rng.uniform() * 4),
                1 + int(rng.uniform() * 5),
            )
            trace = run_engine(script, params, n)
            for o in trace:
                assert not (o.source is Source.DETECTOR and not o.detector_called)
                assert not (o.source is Source.TRACKER and not o.tracker_updated)
                assert (o.box is None) == (o.source is Source.NONE)

    def test_disabled_frames_between_checks_run_nothing(self):
        n = 10
        script = BehaviorScript([None] * n, [False] * n, [B] * n)
        trace = run_engine(script, DatParams(100, 1, 4), n)
        # disabled from frame 1; checks at frames 4 and 8
        for o in trace[1:]:
            if o.frame_index not in (4, 8):
                assert not o.detector_called and not o.tracker_updated


class TestTraceEquivalence:
    def test_matches_reference_simulator_randomized(self):
        rng = SplitMix64(2024)
        for trial in range(150):
            n = 80
            script = random_script(rng, n)
            params = DatParams(
                reset_iterations=1 + int(rng.uniform() * 15),
                consecutive_iou=1 + int(rng.uniform() * 5),
                check_iterations=1 + int(rng.uniform() * 6),
                reset_requires_streak=rng.uniform() < 0.5,
            )
            got = run_engine(script, params, n)
            want = reference_trace(script, params)
            for g, w in zip(got, want):
                assert g.source.value == w["source"], (trial, g.frame_index, params)
                assert g.box == w["box"]
                assert g.detector_called == w["detector_called"]
                assert g.tracker_updated == w["tracker_updated"]


class TestDetectorCallBudget:
    @pytest.mark.parametrize("n", [100, 1000])
    @pytest.mark.parametrize("r", [50, 100, 200])
    @pytest.mark.parametrize("c", [1, 3, 9])
    def test_closed_form_detector_calls(self, n, r, c):
        params = DatParams(r, c, 60)
        trace = run_engine(perfect_script(n), params, n)
        calls = sum(o.detector_called for o in trace)
        closed_form = c * math.ceil((n - c) / (r + c)) + c
        assert abs(calls - closed_form) <= c

    def test_calls_monotone_in_r_and_c(self):
        n = 400
        script = perfect_script(n)

        def calls(r, c):
            return sum(
                o.detector_called for o in run_engine(script, DatParams(r, c, 30), n)
            )

        for c in (1, 2, 4):
            series = [calls(r, c) for r in (10, 25, 50, 100, 200)]
            assert series == sorted(series, reverse=True)
        for r in (20, 60):
            series = [calls(r, c) for c in (1, 2, 3, 5)]
            assert series == sorted(series)

    def test_c_detections_between_scheduled_resets(self):
        n = 60
        params = DatParams(10, 3, 5)
        trace = run_engine(perfect_script(n), params, n)
        # between consecutive resets (no failures): exactly C detector frames
        calls = [o.detector_called for o in trace]
        runs = []
        count = 0
        for flag in calls:
            if flag:
                count += 1
            elif count:
                runs.append(count)
                count = 0
        assert all(run == 3 for run in runs)


class TestRunModes:
    def make_annotated_sequence(self, n=10, first_gt=2):
        frames = [Frame(i, np.zeros((50, 50), dtype=np.uint8)) for i in range(n)]
        annotations = [
            AnnotationRecord(i, Category.LEFT, B) for i in range(first_gt, n)
        ]
        return from_frames(frames, annotations)

    def test_detector_only_calls_every_frame(self):
        n = 10
        seq = tiny_sequence(n)
        script = perfect_script(n)
        detector = ScriptedDetector(script)
        trace = dat_run(seq, detector, None, DatParams(10, 1, 3), RunMode.DETECTOR_ONLY)
        assert all(o.detector_called for o in trace)
        assert all(o.source is Source.DETECTOR for o in trace)
        assert detector.calls == n

    def test_tracker_only_initializes_at_first_annotation(self):
        seq = self.make_annotated_sequence(n=10, first_gt=2)
        script = perfect_script(10)
        trace = dat_run(
            seq, None, lambda: ScriptedTracker(script), DatParams(10, 1, 3), RunMode.TRACKER_ONLY
        )
        assert [o.source.value for o in trace[:2]] == ["NONE", "NONE"]
        assert trace[2].source is Source.TRACKER
        assert trace[2].box == B  # manual init box is the ground truth
        assert all(o.source is Source.TRACKER for o in trace[3:])
        assert not any(o.detector_called for o in trace)

    def test_tracker_only_without_ground_truth_rejected(self):
        seq = tiny_sequence(5)
        with pytest.raises(UnusableBaselineError):
            dat_run(
                seq,
                None,
                lambda: ScriptedTracker(perfect_script(5)),
                DatParams(10, 1, 3),
                RunMode.TRACKER_ONLY,
            )


class TestParams:
    def test_name_round_trip(self):
        params = DatParams.parse("100/3/60")
        assert params.name == "100/3/60"
        assert (params.reset_iterations, params.consecutive_iou, params.check_iterations) == (100, 3, 60)

    def test_parse_rejects_garbage(self):
        with pytest.raises(ValueError):
            DatParams.parse("100/3")
        with pytest.raises(ValueError):
            DatParams.parse("a/b/c")

    def test_validation(self):
        with pytest.raises(ValueError):
            DatParams(0, 1, 1)
        with pytest.raises(ValueError):
            DatParams(1, 1, 1, overlap_threshold=1.0)
        with pytest.raises(ValueError):
            DatParams(1, 1, 1, category=Category.OTHER)
